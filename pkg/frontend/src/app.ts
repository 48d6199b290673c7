import { ServiceClient } from "./api.js";
import { attentionRow, parseRollup } from "./attention.js";
import { describeDiff, diffSpans, isEmptyDiff } from "./diff.js";
import { DEFINITION_CHECKLIST, missingItems } from "./guidance.js";
import { toSegments } from "./highlight.js";
import { metricsTable } from "./metrics.js";
import { SLOTS, WorkbenchSession, type Slot } from "./session.js";
import { EntitySchemaPayload } from "./types.js";

// DOM wiring for the workbench page.  All tagging state lives in
// WorkbenchSession; this file only moves values between the session and the
// document.  Logic is covered by the module tests, not DOM tests.

const DEFAULT_TEXT = "find a cheap italian restaurant nearby with parking";

const DEFAULT_SCHEMA: EntitySchemaPayload = {
  types: [
    { name: "CUISINE", definition: "A style of cooking such as italian or thai" },
    { name: "LOCATION", definition: "A geographical place" },
    { name: "PRICE", definition: "A monetary value" },
  ],
};

function must<T extends Element>(doc: Document, selector: string): T {
  const el = doc.querySelector(selector);
  if (el === null) throw new Error(`workbench page is missing ${selector}`);
  return el as T;
}

function clear(el: Element): void {
  while (el.firstChild !== null) el.removeChild(el.firstChild);
}

export function mountWorkbench(doc: Document, client: ServiceClient): void {
  const session = new WorkbenchSession(
    DEFAULT_TEXT,
    structuredClone(DEFAULT_SCHEMA),
    structuredClone(DEFAULT_SCHEMA),
  );

  const textInput = must<HTMLTextAreaElement>(doc, "#sample-text");
  const diffPanel = must<HTMLUListElement>(doc, "#diff-panel");
  const metricsBody = must<HTMLTableSectionElement>(doc, "#metrics-body");
  const historyPanel = must<HTMLUListElement>(doc, "#history-panel");
  const goldInput = must<HTMLInputElement>(doc, "#gold-file");
  const wantAttention = must<HTMLInputElement>(doc, "#want-attention");
  const attentionSelect = must<HTMLSelectElement>(doc, "#attention-token");
  const attentionRowPanel = must<HTMLDivElement>(doc, "#attention-row");
  const checklistPanel = must<HTMLUListElement>(doc, "#checklist");
  textInput.value = session.text;

  const slotEls = (slot: Slot) => ({
    editor: must<HTMLTextAreaElement>(doc, `#schema-${slot}`),
    confirm: must<HTMLButtonElement>(doc, `#confirm-${slot}`),
    render: must<HTMLDivElement>(doc, `#render-${slot}`),
    status: must<HTMLSpanElement>(doc, `#status-${slot}`),
  });
  const els = { A: slotEls("A"), B: slotEls("B") };

  function renderChecklist(): void {
    clear(checklistPanel);
    const definitions = SLOTS.flatMap((slot) => session.slot(slot).schema.types.map((t) => t.definition));
    const missing = new Set(definitions.flatMap((d) => missingItems(d)).map((item) => item.id));
    for (const item of DEFINITION_CHECKLIST) {
      const li = doc.createElement("li");
      li.textContent = `${missing.has(item.id) ? "☐" : "☑"} ${item.label}: ${item.hint}`;
      checklistPanel.appendChild(li);
    }
  }

  function renderSlot(slot: Slot): void {
    const state = session.slot(slot);
    const target = els[slot].render;
    const status = els[slot].status;
    clear(target);
    if (state.error !== null) {
      status.textContent = `service error: ${state.error}`;
      status.className = "status error";
    } else if (state.stale) {
      status.textContent = "stale: re-tag to refresh";
      status.className = "status stale";
    } else {
      status.textContent = state.response === null ? "not tagged yet" : "up to date";
      status.className = "status";
    }
    if (state.response === null) return;
    for (const segment of toSegments(session.text, state.response.spans)) {
      if (segment.type === null) {
        target.appendChild(doc.createTextNode(segment.text));
      } else {
        const mark = doc.createElement("mark");
        mark.textContent = segment.text;
        mark.className = `ent ent-${segment.type}`;
        mark.title = `${segment.type} score=${segment.score}`;
        target.appendChild(mark);
      }
    }
  }

  function renderDiff(): void {
    clear(diffPanel);
    const a = session.slot("A").response;
    const b = session.slot("B").response;
    if (a === null || b === null) return;
    const diff = diffSpans(a.spans, b.spans);
    if (isEmptyDiff(diff)) {
      const li = doc.createElement("li");
      li.textContent = "no differences";
      diffPanel.appendChild(li);
      return;
    }
    for (const line of describeDiff(diff)) {
      const li = doc.createElement("li");
      li.textContent = line;
      diffPanel.appendChild(li);
    }
  }

  function renderMetrics(): void {
    clear(metricsBody);
    for (const slot of SLOTS) {
      const state = session.slot(slot);
      if (state.metrics === null) continue;
      const previous = session.lastSnapshot(slot)?.metrics ?? null;
      const names = state.schema.types.map((t) => t.name);
      for (const row of metricsTable(state.metrics, previous, names)) {
        const tr = doc.createElement("tr");
        const cells = [
          slot,
          row.label,
          String(row.precision),
          String(row.recall),
          String(row.f1),
          row.deltaF1 === null ? "" : String(row.deltaF1),
        ];
        for (const cell of cells) {
          const td = doc.createElement("td");
          td.textContent = cell;
          tr.appendChild(td);
        }
        metricsBody.appendChild(tr);
      }
    }
  }

  function renderHistory(): void {
    clear(historyPanel);
    for (const snapshot of session.history) {
      const li = doc.createElement("li");
      const f1 = snapshot.metrics === null ? "no metrics" : `f1=${snapshot.metrics.f1}`;
      li.textContent = `${snapshot.label} [${snapshot.slot}] ${f1}`;
      historyPanel.appendChild(li);
    }
  }

  function renderAttentionControls(): void {
    const response = session.slot("A").response;
    const job = response?.attention_job;
    clear(attentionSelect);
    if (response === null || job === undefined) {
      attentionSelect.disabled = true;
      attentionSelect.title = "re-tag schema A with attention enabled to inspect rows";
      return;
    }
    attentionSelect.disabled = false;
    attentionSelect.title = "";
    response.tokens.forEach((token, i) => {
      const option = doc.createElement("option");
      option.value = String(i);
      option.textContent = `${i}: ${token}`;
      attentionSelect.appendChild(option);
    });
  }

  function renderAll(): void {
    renderSlot("A");
    renderSlot("B");
    renderDiff();
    renderMetrics();
    renderHistory();
    renderAttentionControls();
    renderChecklist();
  }

  async function confirmAndRetag(slot: Slot): Promise<void> {
    let schema: EntitySchemaPayload;
    try {
      schema = EntitySchemaPayload.parse(JSON.parse(els[slot].editor.value));
    } catch (err) {
      els[slot].status.textContent = `invalid schema JSON: ${String(err)}`;
      els[slot].status.className = "status error";
      return;
    }
    session.setSchema(slot, schema);
    renderSlot(slot);
    const wantAttn = slot === "A" && wantAttention.checked;
    await session.retag(slot, client, { returnAttention: wantAttn });
    renderAll();
  }

  async function showAttentionRow(): Promise<void> {
    const job = session.slot("A").response?.attention_job;
    if (job === undefined) return;
    const csv = await client.attentionCsv(job);
    const rollup = parseRollup(csv);
    const index = Number(attentionSelect.value);
    const row = attentionRow(rollup, index);
    clear(attentionRowPanel);
    row.values.forEach((value, i) => {
      const cell = doc.createElement("span");
      cell.className = "attn-cell";
      cell.style.opacity = String(Math.max(value, 0.05));
      cell.textContent = rollup.columns[i] ?? "";
      cell.title = String(value);
      attentionRowPanel.appendChild(cell);
    });
  }

  for (const slot of SLOTS) {
    els[slot].editor.value = JSON.stringify(session.slot(slot).schema, null, 2);
    els[slot].confirm.addEventListener("click", () => {
      void confirmAndRetag(slot);
    });
  }

  must<HTMLButtonElement>(doc, "#apply-text").addEventListener("click", () => {
    session.setText(textInput.value);
    renderAll();
  });

  must<HTMLButtonElement>(doc, "#retag-both").addEventListener("click", () => {
    void Promise.all(SLOTS.map((slot) => session.retag(slot, client))).then(renderAll);
  });

  must<HTMLButtonElement>(doc, "#pin-A").addEventListener("click", () => {
    session.pinSnapshot("A");
    renderHistory();
  });
  must<HTMLButtonElement>(doc, "#pin-B").addEventListener("click", () => {
    session.pinSnapshot("B");
    renderHistory();
  });

  goldInput.addEventListener("change", () => {
    const file = goldInput.files?.[0];
    if (file === undefined) return;
    void file.text().then((body) => {
      try {
        session.loadGold(JSON.parse(body));
      } catch (err) {
        must<HTMLSpanElement>(doc, "#gold-status").textContent = `invalid gold file: ${String(err)}`;
        return;
      }
      must<HTMLSpanElement>(doc, "#gold-status").textContent = `${session.goldRecords?.length ?? 0} records loaded`;
    });
  });

  attentionSelect.addEventListener("change", () => {
    void showAttentionRow();
  });

  must<HTMLButtonElement>(doc, "#export-session").addEventListener("click", () => {
    const blob = new Blob([session.exportSession()], { type: "application/json" });
    const link = doc.createElement("a");
    link.href = URL.createObjectURL(blob);
    link.download = "workbench-session.json";
    link.click();
    URL.revokeObjectURL(link.href);
  });

  renderAll();
}

if (typeof document !== "undefined") {
  const meta = document.querySelector<HTMLMetaElement>("meta[name=jpt-service]");
  const baseUrl = meta?.content ?? "http://127.0.0.1:8000";
  document.addEventListener("DOMContentLoaded", () => {
    mountWorkbench(document, new ServiceClient(baseUrl));
  });
}
