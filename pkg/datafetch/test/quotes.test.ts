import { describe, expect, it } from 'vitest';

import {
  UnknownTickerError,
  chartUrl,
  fetchDailySeries,
  fetchUniverse,
  parseChartResponse,
} from '../src/quotes.js';
import { chartBody, fakeHttp, instantSleep, notFoundBody } from './helpers.js';

describe('chartUrl', () => {
  it('encodes the span with an inclusive end', () => {
    const url = chartUrl('SPY', new Date('2023-01-01T00:00:00Z'), new Date('2023-01-31T00:00:00Z'));
    expect(url).toContain('/v8/finance/chart/SPY?');
    expect(url).toContain('interval=1d');
    const p1 = Number(/period1=(\d+)/.exec(url)![1]);
    const p2 = Number(/period2=(\d+)/.exec(url)![1]);
    expect(p2 - p1).toBe(31 * 86_400);
  });
});

describe('parseChartResponse', () => {
  it('extracts dates and adjusted closes', () => {
    const s = parseChartResponse('AAA', chartBody(['2023-01-03', '2023-01-04'], [10.5, 10.75]));
    expect(s.dates).toEqual(['2023-01-03', '2023-01-04']);
    expect(s.closes).toEqual([10.5, 10.75]);
  });

  it('maps non-finite closes to missing', () => {
    const s = parseChartResponse('AAA', chartBody(['2023-01-03', '2023-01-04'], [null, 11]));
    expect(s.closes).toEqual([null, 11]);
  });

  it('raises a named error for unknown tickers', () => {
    expect(() => parseChartResponse('NOPE', notFoundBody())).toThrow(UnknownTickerError);
    expect(() => parseChartResponse('NOPE', notFoundBody())).toThrow(/NOPE/);
  });
});

describe('fetchDailySeries retry behaviour', () => {
  it('retries transient failures with backoff then succeeds', async () => {
    const { http, calls } = fakeHttp([
      { status: 502, body: 'bad gateway' },
      { status: 502, body: 'bad gateway' },
      { status: 200, body: chartBody(['2023-01-03'], [10]) },
    ]);
    const waits: number[] = [];
    const s = await fetchDailySeries('AAA', new Date('2023-01-01'), new Date('2023-01-10'), {
      http,
      retries: 3,
      backoffMs: 100,
      sleeper: async (ms) => {
        waits.push(ms);
      },
    });
    expect(s.closes).toEqual([10]);
    expect(calls.length).toBe(3);
    expect(waits).toEqual([100, 200]); // doubling backoff
  });

  it('gives up after the retry budget', async () => {
    const { http, calls } = fakeHttp([
      { status: 500, body: 'x' },
      { status: 500, body: 'x' },
      { status: 500, body: 'x' },
    ]);
    await expect(
      fetchDailySeries('AAA', new Date('2023-01-01'), new Date('2023-01-10'), {
        http,
        retries: 3,
        sleeper: instantSleep,
      }),
    ).rejects.toThrow(/HTTP 500/);
    expect(calls.length).toBe(3);
  });

  it('does not retry unknown tickers', async () => {
    const { http, calls } = fakeHttp([{ status: 404, body: 'not found' }]);
    await expect(
      fetchDailySeries('GONE', new Date('2023-01-01'), new Date('2023-01-10'), {
        http,
        retries: 3,
        sleeper: instantSleep,
      }),
    ).rejects.toThrow(UnknownTickerError);
    expect(calls.length).toBe(1);
  });
});

describe('fetchUniverse', () => {
  it('spaces sequential requests by the rate limit', async () => {
    const { http } = fakeHttp([
      { status: 200, body: chartBody(['2023-01-03'], [1]) },
      { status: 200, body: chartBody(['2023-01-03'], [2]) },
      { status: 200, body: chartBody(['2023-01-03'], [3]) },
    ]);
    const waits: number[] = [];
    const out = await fetchUniverse(['A', 'B', 'C'], new Date('2023-01-01'), new Date('2023-01-10'), {
      http,
      rateLimitMs: 250,
      sleeper: async (ms) => {
        waits.push(ms);
      },
    });
    expect(out.map((s) => s.ticker)).toEqual(['A', 'B', 'C']);
    expect(waits).toEqual([250, 250]); // n-1 gaps
  });

  it('collects every unknown ticker into one error', async () => {
    const { http } = fakeHttp([
      { status: 200, body: chartBody(['2023-01-03'], [1]) },
      { status: 404, body: 'gone' },
      { status: 404, body: 'gone' },
    ]);
    await expect(
      fetchUniverse(['A', 'BAD1', 'BAD2'], new Date('2023-01-01'), new Date('2023-01-10'), {
        http,
        rateLimitMs: 0,
        sleeper: instantSleep,
      }),
    ).rejects.toThrow(/BAD1, BAD2/);
  });
});
