import type { HttpGet, HttpResponse } from '../src/quotes.js';

/** Epoch seconds at 14:30 UTC (regular-session close hour) for an ISO date. */
export function closeStamp(isoDate: string): number {
  return Math.floor(new Date(`${isoDate}T14:30:00Z`).getTime() / 1000);
}

export function weekdaysBetween(startIso: string, endIso: string): string[] {
  const out: string[] = [];
  const end = new Date(`${endIso}T00:00:00Z`);
  for (let d = new Date(`${startIso}T00:00:00Z`); d <= end; d = new Date(d.getTime() + 86_400_000)) {
    const dow = d.getUTCDay();
    if (dow !== 0 && dow !== 6) {
      out.push(d.toISOString().slice(0, 10));
    }
  }
  return out;
}

export function chartBody(dates: string[], closes: (number | null)[]): string {
  return JSON.stringify({
    chart: {
      result: [
        {
          timestamp: dates.map(closeStamp),
          indicators: { adjclose: [{ adjclose: closes }] },
        },
      ],
      error: null,
    },
  });
}

export function notFoundBody(): string {
  return JSON.stringify({
    chart: { result: null, error: { code: 'Not Found', description: 'No data found, symbol may be delisted' } },
  });
}

export interface FakeCall {
  url: string;
}

/** Scripted transport: pops one response per call, records URLs. */
export function fakeHttp(responses: HttpResponse[]): { http: HttpGet; calls: FakeCall[] } {
  const calls: FakeCall[] = [];
  const queue = [...responses];
  const http: HttpGet = async (url) => {
    calls.push({ url });
    const next = queue.shift();
    if (!next) {
      throw new Error('fake transport exhausted');
    }
    return next;
  };
  return { http, calls };
}

export const instantSleep = async (_ms: number): Promise<void> => {};
