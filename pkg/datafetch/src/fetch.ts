// Orchestration: resolve the fetch spec, download every ticker, write the file.
import { writePriceCsv } from './format.js';
import { fetchUniverse, type FetchOptions } from './quotes.js';
import { DEFAULT_TICKERS } from './universe.js';

export interface FetchSpec {
  tickers?: readonly string[];
  start: Date;
  end: Date;
  out: string;
}

export interface FetchSummary {
  tickers: string[];
  rows: number;
  out: string;
}

export function resolveTickers(spec: FetchSpec): string[] {
  const tickers = (spec.tickers && spec.tickers.length > 0 ? spec.tickers : DEFAULT_TICKERS).map((t) =>
    t.trim().toUpperCase(),
  );
  if (tickers.some((t) => t.length === 0)) {
    throw new Error('blank ticker in list');
  }
  return [...new Set(tickers)];
}

export async function runFetch(spec: FetchSpec, opts: FetchOptions = {}): Promise<FetchSummary> {
  if (!(spec.start < spec.end)) {
    throw new Error('start must precede end');
  }
  const tickers = resolveTickers(spec);
  const series = await fetchUniverse(tickers, spec.start, spec.end, opts);
  const empty = series.filter((s) => s.closes.every((c) => c === null)).map((s) => s.ticker);
  if (empty.length > 0) {
    throw new Error(`no usable closes for: ${empty.join(', ')}`);
  }
  writePriceCsv(series, spec.out);
  const rows = new Set(series.flatMap((s) => s.dates)).size;
  return { tickers, rows, out: spec.out };
}
