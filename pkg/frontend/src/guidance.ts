/**
 * Definition-writing checklist shown next to the schema editors.  Display
 * guidance only: nothing here feeds the model or the metrics, and the
 * heuristics below are plain string checks a user can see through.
 */

export interface ChecklistItem {
  readonly id: string;
  readonly label: string;
  readonly hint: string;
}

export const DEFINITION_CHECKLIST: readonly ChecklistItem[] = [
  {
    id: "inclusions",
    label: "Spell out what counts",
    hint: "Name the cases that must be tagged instead of a bare category word.",
  },
  {
    id: "examples",
    label: "Give concrete examples",
    hint: "Short examples in parentheses anchor boundary cases, e.g. (nearby, around, close by).",
  },
  {
    id: "exclusions",
    label: "State what is out",
    hint: "Say what does not belong to the type so near-misses stay untagged.",
  },
  {
    id: "extent",
    label: "Fix the span extent",
    hint: "Say which word or words to tag, e.g. tag the location word itself.",
  },
];

/**
 * Checklist items a definition appears to miss.  Transparent heuristics:
 * length for inclusions, parentheses for examples, negation words for
 * exclusions, extent vocabulary for extent.
 */
export function missingItems(definition: string): ChecklistItem[] {
  const lower = definition.toLowerCase();
  const present = new Set<string>();
  if (definition.trim().length >= 60) present.add("inclusions");
  if (/\(.+\)/.test(definition)) present.add("examples");
  if (/\b(not|never|except|exclud|without)\b/.test(lower)) present.add("exclusions");
  if (/\b(itself|entire|whole|only the|word|phrase)\b/.test(lower)) present.add("extent");
  return DEFINITION_CHECKLIST.filter((item) => !present.has(item.id));
}
