import { describe, expect, it } from "vitest";
import { DEFINITION_CHECKLIST, missingItems } from "../src/guidance.js";
import type { EntitySchemaPayload } from "../src/types.js";
import { fixture } from "./helpers.js";

const schemaPrecise = (fixture("predict_precise").request.body as { schema: EntitySchemaPayload }).schema;
const PRECISE_LOCATION = schemaPrecise.types[1]!.definition;

describe("definition checklist", () => {
  it("has stable, unique item ids", () => {
    const ids = DEFINITION_CHECKLIST.map((item) => item.id);
    expect(new Set(ids).size).toBe(ids.length);
    expect(ids.length).toBeGreaterThanOrEqual(3);
  });

  it("flags more gaps for the generic definition than for the precise one", () => {
    const generic = missingItems("A geographical place");
    const precise = missingItems(PRECISE_LOCATION);
    expect(generic.length).toBeGreaterThan(precise.length);
    expect(generic.map((item) => item.id)).toContain("examples");
    expect(precise.map((item) => item.id)).not.toContain("examples");
    expect(precise.map((item) => item.id)).not.toContain("extent");
  });
});
