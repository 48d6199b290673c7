import type { SpanRow } from "./types.js";

/**
 * A/B comparison of two predictions over the same text.  Spans are matched
 * by character range: a range present on one side only is added/removed, a
 * shared range with a different type is retyped.  Identical spans are not
 * listed.
 */
export interface SpanDiff {
  readonly added: readonly SpanRow[];
  readonly removed: readonly SpanRow[];
  readonly retyped: readonly { readonly before: SpanRow; readonly after: SpanRow }[];
}

function byRange(spans: readonly SpanRow[]): Map<string, SpanRow> {
  const map = new Map<string, SpanRow>();
  for (const span of spans) map.set(`${span.char_start}:${span.char_end}`, span);
  return map;
}

export function diffSpans(a: readonly SpanRow[], b: readonly SpanRow[]): SpanDiff {
  const mapA = byRange(a);
  const mapB = byRange(b);
  const added: SpanRow[] = [];
  const removed: SpanRow[] = [];
  const retyped: { before: SpanRow; after: SpanRow }[] = [];
  for (const [key, spanA] of mapA) {
    const spanB = mapB.get(key);
    if (spanB === undefined) removed.push(spanA);
    else if (spanB.type_name !== spanA.type_name) retyped.push({ before: spanA, after: spanB });
  }
  for (const [key, spanB] of mapB) {
    if (!mapA.has(key)) added.push(spanB);
  }
  return { added, removed, retyped };
}

export function isEmptyDiff(diff: SpanDiff): boolean {
  return diff.added.length === 0 && diff.removed.length === 0 && diff.retyped.length === 0;
}

/** Human-readable lines for the diff panel. */
export function describeDiff(diff: SpanDiff): string[] {
  const lines: string[] = [];
  for (const span of diff.removed) {
    lines.push(`- ${span.char_start}:${span.char_end} ${span.type_name} "${span.text}"`);
  }
  for (const span of diff.added) {
    lines.push(`+ ${span.char_start}:${span.char_end} ${span.type_name} "${span.text}"`);
  }
  for (const { before, after } of diff.retyped) {
    lines.push(
      `~ ${before.char_start}:${before.char_end} ${before.type_name} -> ${after.type_name} "${before.text}"`,
    );
  }
  return lines;
}
