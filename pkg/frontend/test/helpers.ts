import { readFileSync } from "node:fs";
import type { FetchLike } from "../src/api.js";

export function fixtureText(name: string): string {
  return readFileSync(new URL(`./fixtures/${name}`, import.meta.url), "utf-8");
}

export interface RecordedExchange {
  request: { method: string; path: string; body: unknown };
  response: unknown;
}

export function fixture(name: string): RecordedExchange {
  return JSON.parse(fixtureText(`${name}.json`)) as RecordedExchange;
}

/**
 * JSON with recursively sorted keys and no whitespace: the same canonical
 * form the service writes, so string equality means payload equality down
 * to field order and number round-trip.
 */
export function canonicalStringify(value: unknown): string {
  if (Array.isArray(value)) {
    return `[${value.map(canonicalStringify).join(",")}]`;
  }
  if (value !== null && typeof value === "object") {
    const entries = Object.keys(value as Record<string, unknown>)
      .sort()
      .map((key) => `${JSON.stringify(key)}:${canonicalStringify((value as Record<string, unknown>)[key])}`);
    return `{${entries.join(",")}}`;
  }
  return JSON.stringify(value);
}

export interface StubRoute {
  method: string;
  path: string;
  status?: number;
  body?: unknown;
  text?: string;
  /** Optional guard so one path can serve different payloads by request body. */
  when?: (requestBody: unknown) => boolean;
}

/** fetch stand-in that replays recorded service responses. */
export function stubFetch(routes: StubRoute[]): FetchLike {
  return async (url: string, init?: RequestInit) => {
    const method = init?.method ?? "GET";
    const path = url.replace(/^https?:\/\/[^/]+/, "");
    const requestBody = typeof init?.body === "string" ? JSON.parse(init.body) : undefined;
    const route = routes.find(
      (r) => r.method === method && r.path === path && (r.when === undefined || r.when(requestBody)),
    );
    if (route === undefined) {
      return new Response(JSON.stringify({ error: `no stub for ${method} ${path}` }), {
        status: 500,
        headers: { "content-type": "application/json" },
      });
    }
    if (route.text !== undefined) {
      return new Response(route.text, { status: route.status ?? 200, headers: { "content-type": "text/csv" } });
    }
    return new Response(JSON.stringify(route.body), {
      status: route.status ?? 200,
      headers: { "content-type": "application/json" },
    });
  };
}

/** Route serving a recorded exchange exactly as captured. */
export function routeFor(exchange: RecordedExchange, when?: (body: unknown) => boolean): StubRoute {
  return {
    method: exchange.request.method,
    path: exchange.request.path,
    body: exchange.response,
    ...(when !== undefined ? { when } : {}),
  };
}
