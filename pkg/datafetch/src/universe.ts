// Default download universe: US sector equities, international equities,
// US fixed income, commodities, plus the SPY benchmark (24 tickers).
export const DEFAULT_TICKERS: readonly string[] = [
  // US sector equities
  'XLK', 'XLE', 'XLF', 'XLV', 'XLI', 'XLP', 'XLY', 'XLU', 'XLB', 'XLRE',
  // international equities
  'EWJ', 'EWG', 'EWU', 'FXI', 'EEM',
  // US fixed income
  'TLT', 'IEF', 'LQD', 'EMB',
  // commodities
  'GLD', 'SLV', 'USO', 'DBC',
  // benchmark
  'SPY',
];
