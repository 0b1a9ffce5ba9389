// Canonical price CSV assembly: header `date,<T1>,...`, ISO dates strictly
// ascending, empty cell = missing, plain decimal points.
import { writeFileSync } from 'node:fs';

import type { DailySeries } from './quotes.js';

export function formatClose(value: number): string {
  // Number.prototype.toString is the shortest round-trip decimal; large or
  // tiny magnitudes would render exponents, so clamp to fixed notation
  const s = value.toString();
  if (s.includes('e') || s.includes('E')) {
    return value.toLocaleString('en-US', { useGrouping: false, maximumFractionDigits: 10 });
  }
  return s;
}

export function buildPriceCsv(series: DailySeries[]): string {
  if (series.length === 0) {
    throw new Error('no series to write');
  }
  const allDates = new Set<string>();
  for (const s of series) {
    for (const d of s.dates) allDates.add(d);
  }
  const dates = [...allDates].sort();
  const byTicker = series.map((s) => {
    const m = new Map<string, number | null>();
    s.dates.forEach((d, i) => m.set(d, s.closes[i]));
    return m;
  });
  const lines: string[] = ['date,' + series.map((s) => s.ticker).join(',')];
  for (const d of dates) {
    const cells = byTicker.map((m) => {
      const v = m.get(d);
      return v === null || v === undefined ? '' : formatClose(v);
    });
    lines.push(`${d},${cells.join(',')}`);
  }
  return lines.join('\n') + '\n';
}

export function writePriceCsv(series: DailySeries[], path: string): void {
  writeFileSync(path, buildPriceCsv(series), { encoding: 'utf-8' });
}
