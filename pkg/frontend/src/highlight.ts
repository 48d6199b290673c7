import type { SpanRow } from "./types.js";

/**
 * One piece of the displayed text: either an entity span (type set, score
 * carried through from the service) or plain text between entities.
 * Segments tile the text exactly: non-overlapping, in order, no gaps.
 */
export interface Segment {
  readonly text: string;
  readonly charStart: number;
  readonly charEnd: number;
  readonly type: string | null;
  readonly score: number | null;
}

/**
 * Split text into renderable segments from service span rows.  The service
 * guarantees non-overlapping in-bounds spans; violations here mean the
 * payload was corrupted in transit, so they throw rather than render wrong
 * highlights.
 */
export function toSegments(text: string, spans: readonly SpanRow[]): Segment[] {
  const ordered = [...spans].sort((a, b) => a.char_start - b.char_start);
  const out: Segment[] = [];
  let cursor = 0;
  for (const span of ordered) {
    if (span.char_start < 0 || span.char_end > text.length || span.char_start >= span.char_end) {
      throw new Error(`span ${span.char_start}:${span.char_end} outside text of length ${text.length}`);
    }
    if (span.char_start < cursor) {
      throw new Error(`span ${span.char_start}:${span.char_end} overlaps a previous span`);
    }
    if (span.char_start > cursor) {
      out.push({
        text: text.slice(cursor, span.char_start),
        charStart: cursor,
        charEnd: span.char_start,
        type: null,
        score: null,
      });
    }
    out.push({
      text: text.slice(span.char_start, span.char_end),
      charStart: span.char_start,
      charEnd: span.char_end,
      type: span.type_name,
      score: span.score,
    });
    cursor = span.char_end;
  }
  if (cursor < text.length) {
    out.push({ text: text.slice(cursor), charStart: cursor, charEnd: text.length, type: null, score: null });
  }
  return out;
}

/** Identity of one highlight: character range plus type name. */
export function highlightKey(span: SpanRow): string {
  return `${span.char_start}:${span.char_end}:${span.type_name}`;
}

/** The set of highlights a response produces, for change detection. */
export function highlightedSet(spans: readonly SpanRow[]): Set<string> {
  return new Set(spans.map(highlightKey));
}
