import { z } from "zod";

// Wire types for the /v1 service.  Parsing only validates; callers keep the
// payload object exactly as the service sent it, so every rendered value
// traces back to service bytes.

export const EntityTypeDef = z.object({
  name: z.string().min(1),
  definition: z.string(),
});
export type EntityTypeDef = z.infer<typeof EntityTypeDef>;

export const EntitySchemaPayload = z.object({
  types: z.array(EntityTypeDef).min(1),
  o_definition: z.string().optional(),
});
export type EntitySchemaPayload = z.infer<typeof EntitySchemaPayload>;

export const SpanRow = z.object({
  start: z.number().int().nonnegative(),
  end: z.number().int().positive(),
  type: z.number().int().positive(),
  type_name: z.string(),
  score: z.number(),
  char_start: z.number().int().nonnegative(),
  char_end: z.number().int().positive(),
  text: z.string(),
});
export type SpanRow = z.infer<typeof SpanRow>;

export const TimingUs = z.record(z.string(), z.number());

export const PredictResponse = z.object({
  labels: z.array(z.number().int()),
  schema_id: z.string(),
  spans: z.array(SpanRow),
  tokens: z.array(z.string()),
  probs: z.array(z.array(z.number())).optional(),
  attention_job: z.string().optional(),
  timing_us: TimingUs.optional(),
});
export type PredictResponse = z.infer<typeof PredictResponse>;

export const PerTypeStats = z.object({
  precision: z.number(),
  recall: z.number(),
  f1: z.number(),
  n_gold: z.number().int(),
  n_pred: z.number().int(),
});
export type PerTypeStats = z.infer<typeof PerTypeStats>;

export const EvaluateResponse = z.object({
  precision: z.number(),
  recall: z.number(),
  f1: z.number(),
  true_positives: z.number().int(),
  n_gold: z.number().int(),
  n_pred: z.number().int(),
  n_records: z.number().int(),
  empty: z.boolean(),
  per_type: z.record(z.string(), PerTypeStats),
  buckets: z.record(z.string(), z.number().int()),
  confusion: z.array(z.array(z.number().int())),
  timing_us: TimingUs.optional(),
});
export type EvaluateResponse = z.infer<typeof EvaluateResponse>;

export const HealthzResponse = z.object({
  status: z.string(),
  checksum: z.string(),
  config: z.record(z.string(), z.unknown()),
});
export type HealthzResponse = z.infer<typeof HealthzResponse>;

export const SchemaRegisterResponse = z.object({
  id: z.string(),
  n_types: z.number().int(),
});
export type SchemaRegisterResponse = z.infer<typeof SchemaRegisterResponse>;

export const ErrorResponse = z.object({ error: z.string() });
export type ErrorResponse = z.infer<typeof ErrorResponse>;

// Gold annotations uploaded by the user: char-offset spans aligned to token
// boundaries, types referenced by name.  Same shape the dataset JSONL uses.
export const GoldSpan = z.object({
  start: z.number().int().nonnegative(),
  end: z.number().int().positive(),
  type: z.string().min(1),
});
export type GoldSpan = z.infer<typeof GoldSpan>;

export const GoldRecord = z.object({
  text: z.string().min(1),
  entity_types: z.array(EntityTypeDef).min(1),
  spans: z.array(GoldSpan).optional(),
  o_definition: z.string().optional(),
});
export type GoldRecord = z.infer<typeof GoldRecord>;
