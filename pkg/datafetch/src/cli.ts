#!/usr/bin/env node
// CLI: download adjusted closes into the engine's canonical price CSV.
//
//   rmats-datafetch --tickers SPY,TLT,GLD --start 2023-01-01 --end 2023-03-01 --out prices.csv
//
// Omitting --tickers downloads the default 24-ticker universe.
import yargs from 'yargs';
import { hideBin } from 'yargs/helpers';

import { runFetch } from './fetch.js';
import { UnknownTickerError } from './quotes.js';

function parseIsoDate(raw: string, flag: string): Date {
  if (!/^\d{4}-\d{2}-\d{2}$/.test(raw)) {
    throw new Error(`${flag} must be an ISO date (YYYY-MM-DD)`);
  }
  const d = new Date(`${raw}T00:00:00Z`);
  if (Number.isNaN(d.getTime())) {
    throw new Error(`${flag}: invalid date '${raw}'`);
  }
  return d;
}

export async function main(argv: string[]): Promise<number> {
  const args = await yargs(argv)
    .option('tickers', { type: 'string', describe: 'comma-separated list; default = the 24-ticker universe' })
    .option('start', { type: 'string', demandOption: true, describe: 'first date, inclusive (YYYY-MM-DD)' })
    .option('end', { type: 'string', demandOption: true, describe: 'last date, inclusive (YYYY-MM-DD)' })
    .option('out', { type: 'string', demandOption: true, describe: 'output CSV path' })
    .strict()
    .help()
    .parse();

  try {
    const summary = await runFetch({
      tickers: args.tickers ? args.tickers.split(',') : undefined,
      start: parseIsoDate(args.start, '--start'),
      end: parseIsoDate(args.end, '--end'),
      out: args.out,
    });
    process.stderr.write(`wrote ${summary.rows} rows x ${summary.tickers.length} tickers to ${summary.out}\n`);
    return 0;
  } catch (err) {
    const msg = err instanceof Error ? err.message : String(err);
    process.stderr.write(`error: ${msg}\n`);
    return err instanceof UnknownTickerError ? 1 : 2;
  }
}

const invokedDirectly = process.argv[1] && import.meta.url.endsWith(process.argv[1].split('/').pop() ?? '');
if (invokedDirectly) {
  main(hideBin(process.argv)).then((code) => {
    process.exitCode = code;
  });
}
