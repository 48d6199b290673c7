import { describe, expect, it } from "vitest";
import { highlightedSet, toSegments } from "../src/highlight.js";
import type { PredictResponse, SpanRow } from "../src/types.js";
import { fixture } from "./helpers.js";

function spanRow(charStart: number, charEnd: number, typeName: string): SpanRow {
  return {
    start: 0,
    end: 1,
    type: 1,
    type_name: typeName,
    score: 0.5,
    char_start: charStart,
    char_end: charEnd,
    text: "x".repeat(charEnd - charStart),
  };
}

describe("toSegments", () => {
  const recorded = fixture("predict_generic");
  const text = (recorded.request.body as { text: string }).text;
  const response = recorded.response as PredictResponse;

  it("tiles the text exactly with ordered non-overlapping segments", () => {
    const segments = toSegments(text, response.spans);
    expect(segments.map((s) => s.text).join("")).toBe(text);
    let cursor = 0;
    for (const segment of segments) {
      expect(segment.charStart).toBe(cursor);
      expect(segment.charEnd).toBeGreaterThan(segment.charStart);
      expect(segment.text).toBe(text.slice(segment.charStart, segment.charEnd));
      cursor = segment.charEnd;
    }
    expect(cursor).toBe(text.length);
  });

  it("carries every service span through unchanged", () => {
    const segments = toSegments(text, response.spans);
    const entitySegments = segments.filter((s) => s.type !== null);
    expect(entitySegments).toHaveLength(response.spans.length);
    response.spans.forEach((span, i) => {
      const segment = entitySegments[i]!;
      expect(segment.charStart).toBe(span.char_start);
      expect(segment.charEnd).toBe(span.char_end);
      expect(segment.type).toBe(span.type_name);
      expect(Object.is(segment.score, span.score)).toBe(true);
      expect(segment.text).toBe(span.text);
    });
  });

  it("handles no spans and a full-cover span", () => {
    expect(toSegments("plain words", [])).toStrictEqual([
      { text: "plain words", charStart: 0, charEnd: 11, type: null, score: null },
    ]);
    const full = toSegments("paris", [spanRow(0, 5, "LOCATION")]);
    expect(full).toHaveLength(1);
    expect(full[0]!.type).toBe("LOCATION");
  });

  it("rejects overlapping or out-of-bounds spans", () => {
    expect(() => toSegments("abcdef", [spanRow(0, 4, "A"), spanRow(2, 6, "B")])).toThrowError(/overlap/);
    expect(() => toSegments("abc", [spanRow(0, 9, "A")])).toThrowError(/outside/);
    expect(() => toSegments("abc", [spanRow(2, 2, "A")])).toThrowError(/outside/);
  });
});

describe("highlightedSet", () => {
  it("keys highlights by range and type", () => {
    const set = highlightedSet([spanRow(0, 4, "LOCATION"), spanRow(5, 8, "PRICE")]);
    expect(set).toStrictEqual(new Set(["0:4:LOCATION", "5:8:PRICE"]));
  });
});
