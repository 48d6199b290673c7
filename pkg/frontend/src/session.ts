import { z } from "zod";
import { ServiceApiError, type ServiceClient } from "./api.js";
import {
  EntitySchemaPayload,
  EvaluateResponse,
  GoldRecord,
  PredictResponse,
} from "./types.js";

export type Slot = "A" | "B";
export const SLOTS: readonly Slot[] = ["A", "B"];

/** Per-schema state: the editable schema plus the last service results for it. */
export interface SlotState {
  schema: EntitySchemaPayload;
  response: PredictResponse | null;
  metrics: EvaluateResponse | null;
  /** Response/metrics predate the current text or schema. */
  stale: boolean;
  /** Last service error for this slot, shown inline; null when clear. */
  error: string | null;
}

/** Pinned (schema, metrics) pair; deep-frozen so history cannot drift. */
export interface Snapshot {
  readonly label: string;
  readonly slot: Slot;
  readonly schema: EntitySchemaPayload;
  readonly metrics: EvaluateResponse | null;
}

export type RetagResult =
  | { readonly status: "ok"; readonly response: PredictResponse }
  | { readonly status: "stale" }
  | { readonly status: "error"; readonly message: string };

const SessionDocument = z.object({
  version: z.literal(1),
  text: z.string(),
  slots: z.record(
    z.enum(["A", "B"]),
    z.object({
      schema: EntitySchemaPayload,
      response: PredictResponse.nullable(),
      metrics: EvaluateResponse.nullable(),
      stale: z.boolean(),
    }),
  ),
  gold: z.array(GoldRecord).nullable(),
  snapshots: z.array(
    z.object({
      label: z.string(),
      slot: z.enum(["A", "B"]),
      schema: EntitySchemaPayload,
      metrics: EvaluateResponse.nullable(),
    }),
  ),
});
type SessionDocument = z.infer<typeof SessionDocument>;

function deepFreeze<T>(value: T): T {
  if (value !== null && typeof value === "object") {
    for (const key of Object.keys(value as object)) {
      deepFreeze((value as Record<string, unknown>)[key]);
    }
    Object.freeze(value);
  }
  return value;
}

/**
 * State for one definition-engineering session: the working text, two
 * editable schemas tagged side by side, the last service results per
 * schema, optional gold annotations, and an append-only history of pinned
 * snapshots.
 *
 * The session never computes spans or metrics itself; it stores service
 * responses and invalidation flags.  Edits take effect on the explicit
 * retag call, and each slot runs at most one predict at a time with
 * latest-wins semantics.
 */
export class WorkbenchSession {
  text: string;
  private readonly slots: Record<Slot, SlotState>;
  private readonly seq: Record<Slot, number> = { A: 0, B: 0 };
  private gold: GoldRecord[] | null = null;
  private readonly snapshots: Snapshot[] = [];

  constructor(text: string, schemaA: EntitySchemaPayload, schemaB: EntitySchemaPayload) {
    this.text = text;
    this.slots = {
      A: { schema: structuredClone(schemaA), response: null, metrics: null, stale: false, error: null },
      B: { schema: structuredClone(schemaB), response: null, metrics: null, stale: false, error: null },
    };
  }

  slot(slot: Slot): Readonly<SlotState> {
    return this.slots[slot];
  }

  get history(): readonly Snapshot[] {
    return [...this.snapshots];
  }

  get goldRecords(): readonly GoldRecord[] | null {
    return this.gold;
  }

  /** Replace the working text; results for both schemas become stale. */
  setText(text: string): void {
    this.text = text;
    for (const slot of SLOTS) {
      if (this.slots[slot].response !== null) this.slots[slot].stale = true;
    }
  }

  /**
   * Edit one type's definition on one schema.  Only that schema's results
   * become stale; nothing is sent until retag confirms the edit.
   */
  editDefinition(slot: Slot, typeName: string, definition: string): void {
    const state = this.slots[slot];
    const entry = state.schema.types.find((t) => t.name === typeName);
    if (entry === undefined) {
      throw new Error(`schema ${slot} has no type named ${typeName}`);
    }
    entry.definition = definition;
    if (state.response !== null) state.stale = true;
  }

  /** Replace a whole schema (e.g. from the JSON editor); that slot goes stale. */
  setSchema(slot: Slot, schema: EntitySchemaPayload): void {
    EntitySchemaPayload.parse(schema);
    const state = this.slots[slot];
    state.schema = structuredClone(schema);
    if (state.response !== null) state.stale = true;
  }

  /** Validate and store uploaded gold annotations (null clears them). */
  loadGold(records: unknown): void {
    this.gold = records === null ? null : z.array(GoldRecord).min(1).parse(records);
  }

  /**
   * Confirm the slot's current schema against the service: predict over the
   * working text and, when gold is loaded, refresh metrics.  If another
   * retag for the same slot starts before this one finishes, the earlier
   * result is discarded (latest wins).
   */
  async retag(
    slot: Slot,
    client: ServiceClient,
    options: { returnAttention?: boolean } = {},
  ): Promise<RetagResult> {
    const state = this.slots[slot];
    const ticket = ++this.seq[slot];
    const schema = structuredClone(state.schema);
    try {
      const response = await client.predict({
        text: this.text,
        schema,
        ...(options.returnAttention ? { return_attention: true } : {}),
      });
      if (ticket !== this.seq[slot]) return { status: "stale" };
      state.response = response;
      state.stale = false;
      state.error = null;
      if (this.gold !== null) {
        const metrics = await client.evaluate({ records: this.goldForSchema(schema) });
        if (ticket !== this.seq[slot]) return { status: "stale" };
        state.metrics = metrics;
      }
      return { status: "ok", response };
    } catch (err) {
      if (ticket !== this.seq[slot]) return { status: "stale" };
      const message = err instanceof ServiceApiError ? err.message : String(err);
      state.error = message;
      return { status: "error", message };
    }
  }

  /**
   * Gold records re-keyed to a schema's current definitions, so metrics
   * reflect the definitions being edited.  Every gold span type must exist
   * in the schema.
   */
  goldForSchema(schema: EntitySchemaPayload): GoldRecord[] {
    if (this.gold === null) throw new Error("no gold annotations loaded");
    const known = new Set(schema.types.map((t) => t.name));
    return this.gold.map((record) => {
      for (const span of record.spans ?? []) {
        if (!known.has(span.type)) {
          throw new Error(`gold span type ${span.type} is not in the schema`);
        }
      }
      return { ...structuredClone(record), entity_types: structuredClone(schema.types) };
    });
  }

  /** Pin the slot's (schema, metrics) pair to the append-only history. */
  pinSnapshot(slot: Slot, label = ""): Snapshot {
    const state = this.slots[slot];
    const snapshot = deepFreeze({
      label: label || `pin ${this.snapshots.length + 1}`,
      slot,
      schema: structuredClone(state.schema),
      metrics: state.metrics === null ? null : structuredClone(state.metrics),
    });
    this.snapshots.push(snapshot);
    return snapshot;
  }

  /** Most recent pinned snapshot for a slot, for the delta-F1 column. */
  lastSnapshot(slot: Slot): Snapshot | null {
    for (let i = this.snapshots.length - 1; i >= 0; i--) {
      const snapshot = this.snapshots[i];
      if (snapshot !== undefined && snapshot.slot === slot) return snapshot;
    }
    return null;
  }

  /** Serialize the session (text, schemas, results, gold, history) as JSON. */
  exportSession(): string {
    const doc: SessionDocument = {
      version: 1,
      text: this.text,
      slots: {
        A: this.exportSlot("A"),
        B: this.exportSlot("B"),
      },
      gold: this.gold,
      snapshots: this.snapshots.map((s) => ({
        label: s.label,
        slot: s.slot,
        schema: s.schema,
        metrics: s.metrics,
      })),
    };
    return JSON.stringify(doc, null, 2);
  }

  private exportSlot(slot: Slot) {
    const state = this.slots[slot];
    return {
      schema: state.schema,
      response: state.response,
      metrics: state.metrics,
      stale: state.stale,
    };
  }

  /** Rebuild a session from exportSession output; invalid documents throw. */
  static importSession(json: string): WorkbenchSession {
    // Validate but keep the raw document: zod's parse output reorders keys,
    // and stored responses must survive byte-for-byte.
    const raw = JSON.parse(json) as unknown;
    SessionDocument.parse(raw);
    const doc = raw as SessionDocument;
    const slotA = doc.slots.A;
    const slotB = doc.slots.B;
    if (slotA === undefined || slotB === undefined) {
      throw new Error("session document must contain slots A and B");
    }
    const session = new WorkbenchSession(doc.text, slotA.schema, slotB.schema);
    for (const slot of SLOTS) {
      const saved = slot === "A" ? slotA : slotB;
      const state = session.slots[slot];
      state.response = saved.response;
      state.metrics = saved.metrics;
      state.stale = saved.stale;
    }
    session.gold = doc.gold === null ? null : doc.gold;
    for (const snapshot of doc.snapshots) {
      session.snapshots.push(deepFreeze(structuredClone(snapshot)));
    }
    return session;
  }
}
