// Daily adjusted-close retrieval from the public chart endpoint, with
// sequential rate limiting and bounded retries for transient failures.

export interface HttpResponse {
  status: number;
  body: string;
}

export type HttpGet = (url: string) => Promise<HttpResponse>;

export interface DailySeries {
  ticker: string;
  /** ISO dates ascending */
  dates: string[];
  /** adjusted closes aligned with dates; null = missing that day */
  closes: (number | null)[];
}

export class UnknownTickerError extends Error {
  constructor(public readonly tickers: string[]) {
    super(`unknown ticker(s): ${tickers.join(', ')}`);
    this.name = 'UnknownTickerError';
  }
}

const QUOTE_HOST = 'https://query1.finance.yahoo.com';

export const defaultHttp: HttpGet = async (url) => {
  const res = await fetch(url, {
    headers: { 'User-Agent': 'Mozilla/5.0 (compatible; rmats-datafetch/0.1)' },
  });
  return { status: res.status, body: await res.text() };
};

export const sleep = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms));

export function chartUrl(ticker: string, start: Date, end: Date): string {
  const p1 = Math.floor(start.getTime() / 1000);
  // the range end is exclusive upstream; pad one day so `end` itself is included
  const p2 = Math.floor(end.getTime() / 1000) + 86_400;
  const query = `period1=${p1}&period2=${p2}&interval=1d&events=div%2Csplit`;
  return `${QUOTE_HOST}/v8/finance/chart/${encodeURIComponent(ticker)}?${query}`;
}

function toIsoDate(epochSeconds: number): string {
  return new Date(epochSeconds * 1000).toISOString().slice(0, 10);
}

export function parseChartResponse(ticker: string, body: string): DailySeries {
  let payload: any;
  try {
    payload = JSON.parse(body);
  } catch {
    throw new Error(`${ticker}: unparseable quote response`);
  }
  const chart = payload?.chart;
  if (chart?.error || !chart?.result?.length) {
    const code = chart?.error?.code ?? 'no data';
    if (String(code).toLowerCase().includes('not found') || code === 'no data') {
      throw new UnknownTickerError([ticker]);
    }
    throw new Error(`${ticker}: quote service error (${code})`);
  }
  const result = chart.result[0];
  const timestamps: number[] = result.timestamp ?? [];
  const adj: (number | null)[] =
    result.indicators?.adjclose?.[0]?.adjclose ?? result.indicators?.quote?.[0]?.close ?? [];
  if (timestamps.length === 0) {
    throw new UnknownTickerError([ticker]);
  }
  const dates: string[] = [];
  const closes: (number | null)[] = [];
  let prev = '';
  for (let i = 0; i < timestamps.length; i++) {
    const day = toIsoDate(timestamps[i]);
    if (day <= prev) continue; // collapse duplicate/unordered rows
    const value = adj[i];
    dates.push(day);
    closes.push(typeof value === 'number' && Number.isFinite(value) && value > 0 ? value : null);
    prev = day;
  }
  return { ticker, dates, closes };
}

export interface FetchOptions {
  http?: HttpGet;
  retries?: number;       // attempts per ticker
  backoffMs?: number;     // base backoff, doubled per retry
  rateLimitMs?: number;   // minimum spacing between requests
  sleeper?: (ms: number) => Promise<void>;
}

export async function fetchDailySeries(
  ticker: string,
  start: Date,
  end: Date,
  opts: FetchOptions = {},
): Promise<DailySeries> {
  const http = opts.http ?? defaultHttp;
  const retries = opts.retries ?? 3;
  const backoff = opts.backoffMs ?? 500;
  const sleeper = opts.sleeper ?? sleep;
  const url = chartUrl(ticker, start, end);
  let lastError: Error = new Error(`${ticker}: fetch failed`);
  for (let attempt = 0; attempt < retries; attempt++) {
    if (attempt > 0) {
      await sleeper(backoff * 2 ** (attempt - 1));
    }
    try {
      const res = await http(url);
      if (res.status === 404) {
        throw new UnknownTickerError([ticker]);
      }
      if (res.status !== 200) {
        throw new Error(`${ticker}: HTTP ${res.status}`);
      }
      return parseChartResponse(ticker, res.body);
    } catch (err) {
      if (err instanceof UnknownTickerError) {
        throw err; // definitive; retrying cannot help
      }
      lastError = err instanceof Error ? err : new Error(String(err));
    }
  }
  throw lastError;
}

/** Fetch every ticker sequentially, spacing requests by the rate limit. */
export async function fetchUniverse(
  tickers: readonly string[],
  start: Date,
  end: Date,
  opts: FetchOptions = {},
): Promise<DailySeries[]> {
  const spacing = opts.rateLimitMs ?? 250;
  const sleeper = opts.sleeper ?? sleep;
  const out: DailySeries[] = [];
  const unknown: string[] = [];
  for (let i = 0; i < tickers.length; i++) {
    if (i > 0 && spacing > 0) {
      await sleeper(spacing);
    }
    try {
      out.push(await fetchDailySeries(tickers[i], start, end, opts));
    } catch (err) {
      if (err instanceof UnknownTickerError) {
        unknown.push(...err.tickers);
      } else {
        throw err;
      }
    }
  }
  if (unknown.length > 0) {
    throw new UnknownTickerError(unknown);
  }
  return out;
}
