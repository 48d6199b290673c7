import type { EvaluateResponse } from "./types.js";

/**
 * One row of the per-type metrics table.  precision/recall/f1 and the count
 * columns are the service's numbers unchanged; deltaF1 is the only derived
 * column (current minus previous snapshot).
 */
export interface MetricsRow {
  readonly typeIndex: string;
  readonly label: string;
  readonly precision: number;
  readonly recall: number;
  readonly f1: number;
  readonly nGold: number;
  readonly nPred: number;
  readonly deltaF1: number | null;
}

/**
 * Build the metrics table from an evaluate report.  Type indices are
 * resolved to names through typeNames (1-based, as the service numbers
 * entity classes); a trailing "all" row carries the micro scores.
 */
export function metricsTable(
  report: EvaluateResponse,
  previous: EvaluateResponse | null = null,
  typeNames: readonly string[] = [],
): MetricsRow[] {
  const keys = Object.keys(report.per_type).sort((x, y) => Number(x) - Number(y));
  const rows: MetricsRow[] = [];
  for (const key of keys) {
    const stats = report.per_type[key];
    if (stats === undefined) continue;
    const prev = previous?.per_type[key];
    rows.push({
      typeIndex: key,
      label: typeNames[Number(key) - 1] ?? key,
      precision: stats.precision,
      recall: stats.recall,
      f1: stats.f1,
      nGold: stats.n_gold,
      nPred: stats.n_pred,
      deltaF1: previous === null ? null : stats.f1 - (prev?.f1 ?? 0),
    });
  }
  rows.push({
    typeIndex: "all",
    label: "all",
    precision: report.precision,
    recall: report.recall,
    f1: report.f1,
    nGold: report.n_gold,
    nPred: report.n_pred,
    deltaF1: previous === null ? null : report.f1 - previous.f1,
  });
  return rows;
}
