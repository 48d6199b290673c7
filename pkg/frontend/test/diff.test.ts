import { describe, expect, it } from "vitest";
import { describeDiff, diffSpans, isEmptyDiff } from "../src/diff.js";
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
    text: "t",
  };
}

const generic = (fixture("predict_generic").response as PredictResponse).spans;
const precise = (fixture("predict_precise").response as PredictResponse).spans;

describe("diffSpans", () => {
  it("is empty when both schemas produced identical spans", () => {
    const diff = diffSpans(generic, generic);
    expect(isEmptyDiff(diff)).toBe(true);
    expect(describeDiff(diff)).toStrictEqual([]);
  });

  it("classifies the recorded definition edit as removals plus additions", () => {
    const diff = diffSpans(generic, precise);
    expect(isEmptyDiff(diff)).toBe(false);
    // No char range survives the edit on the recorded sample, so every
    // generic span is removed and every precise span is added.
    expect(diff.removed).toStrictEqual(generic);
    expect(diff.added).toStrictEqual(precise);
    expect(diff.retyped).toStrictEqual([]);
  });

  it("reports a same-range type change as retyped", () => {
    const before = [spanRow(0, 4, "LOCATION"), spanRow(5, 9, "PRICE")];
    const after = [spanRow(0, 4, "CUISINE"), spanRow(5, 9, "PRICE")];
    const diff = diffSpans(before, after);
    expect(diff.added).toStrictEqual([]);
    expect(diff.removed).toStrictEqual([]);
    expect(diff.retyped).toStrictEqual([{ before: before[0]!, after: after[0]! }]);
  });

  it("describes changes with range, type, and text", () => {
    const lines = describeDiff(diffSpans([spanRow(0, 4, "LOCATION")], [spanRow(0, 4, "CUISINE")]));
    expect(lines).toStrictEqual(['~ 0:4 LOCATION -> CUISINE "t"']);
  });
});
