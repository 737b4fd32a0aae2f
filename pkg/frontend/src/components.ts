// The three interactive views: closet editor, recommendation panel, and
// the score probe. Plain DOM construction, no framework.

import { ApiError, ServiceClient } from "./api.js";
import { ClosetState, RequestGuard } from "./state.js";
import {
  CONFIGURATION_LABELS,
  MAIN_PARTS,
  METHODS,
  type ItemInfo,
  type PartName,
  type RecommendedOutfit,
} from "./types.js";
import {
  Assembly,
  assemblyWire,
  covers,
  emptyAssembly,
  place,
  placementError,
  removeFromAssembly,
} from "./validity.js";

export function h(
  tag: string,
  attrs: Record<string, string> = {},
  children: (Node | string)[] = [],
): HTMLElement {
  const el = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    el.setAttribute(key, value);
  }
  for (const child of children) {
    el.append(child);
  }
  return el;
}

function swatches(item: ItemInfo): HTMLElement {
  const row = h("span", { class: "swatches" });
  for (const color of item.colors ?? []) {
    const [r, g, b] = color;
    const dot = h("span", { class: "swatch", title: `rgb(${r},${g},${b})` });
    dot.style.backgroundColor = `rgb(${r},${g},${b})`;
    row.append(dot);
  }
  return row;
}

function itemLabel(item: ItemInfo): HTMLElement {
  return h("span", { class: "item-label" }, [
    swatches(item),
    `${item.name} (${item.id})`,
  ]);
}

function notice(container: HTMLElement, text: string, kind = "error"): void {
  const box = container.querySelector(".notice");
  if (box) {
    box.textContent = text;
    box.className = `notice ${kind}${text ? "" : " hidden"}`;
  }
}

// ---------------------------------------------------------------------------
// Closet editor
// ---------------------------------------------------------------------------

export class ClosetEditor {
  constructor(
    public root: HTMLElement,
    public client: ServiceClient,
    public state: ClosetState,
  ) {
    state.onChange(() => this.render());
  }

  async init(): Promise<void> {
    const items = await this.client.listItems();
    for (const item of items) this.state.items.set(item.id, item);
    const closets = await this.client.listClosets();
    if (closets.length > 0) {
      const c = closets[0];
      this.state.setCloset(c.id, c.name, c.item_ids);
    }
    this.render();
  }

  async createCloset(name: string): Promise<void> {
    const closet = await this.client.createCloset(name);
    this.state.setCloset(closet.id, closet.name, closet.item_ids);
  }

  async addItem(itemId: string): Promise<void> {
    if (!this.state.closetId) return;
    try {
      const closet = await this.client.updateClosetItems(this.state.closetId, [itemId], []);
      this.state.setClosetItems(closet.item_ids);
    } catch (err) {
      notice(this.root, err instanceof ApiError ? err.message : String(err));
    }
  }

  async removeItem(itemId: string): Promise<void> {
    if (!this.state.closetId) return;
    try {
      await this.client.updateClosetItems(this.state.closetId, [], [itemId]);
      this.state.removeFromCloset(itemId);
    } catch (err) {
      notice(this.root, err instanceof ApiError ? err.message : String(err));
    }
  }

  render(): void {
    const state = this.state;
    this.root.replaceChildren(
      h("div", { class: "notice hidden" }),
      h("h2", {}, [state.closetId ? `Closet: ${state.closetName}` : "No closet yet"]),
    );

    const grouped = new Map<PartName, ItemInfo[]>();
    for (const id of state.closetItemIds) {
      const item = state.items.get(id);
      if (!item) continue;
      const list = grouped.get(item.part) ?? [];
      list.push(item);
      grouped.set(item.part, list);
    }
    const closetList = h("div", { class: "closet-groups" });
    for (const part of [...MAIN_PARTS, "accessory" as PartName]) {
      const items = grouped.get(part) ?? [];
      if (!items.length) continue;
      const group = h("div", { class: "part-group" }, [h("h3", {}, [part])]);
      for (const item of items) {
        const pinBtn = h(
          "button",
          { class: state.pinned.has(item.id) ? "pin active" : "pin", "data-id": item.id },
          [state.pinned.has(item.id) ? "unpin" : "pin"],
        );
        pinBtn.onclick = () =>
          state.pinned.has(item.id) ? state.unpin(item.id) : state.pin(item.id);
        const exclBtn = h(
          "button",
          {
            class: state.excluded.has(item.id) ? "exclude active" : "exclude",
            "data-id": item.id,
          },
          [state.excluded.has(item.id) ? "include" : "exclude"],
        );
        exclBtn.onclick = () =>
          state.excluded.has(item.id) ? state.unexclude(item.id) : state.exclude(item.id);
        const rmBtn = h("button", { class: "remove", "data-id": item.id }, ["remove"]);
        rmBtn.onclick = () => void this.removeItem(item.id);
        group.append(
          h("div", { class: "closet-item", "data-id": item.id }, [
            itemLabel(item),
            pinBtn,
            exclBtn,
            rmBtn,
          ]),
        );
      }
      closetList.append(group);
    }
    this.root.append(closetList);

    // corpus browser for adding items
    const browser = h("div", { class: "browser" }, [h("h3", {}, ["Add from catalog"])]);
    const inCloset = new Set(state.closetItemIds);
    for (const item of state.items.values()) {
      if (inCloset.has(item.id)) continue;
      const addBtn = h("button", { class: "add", "data-id": item.id }, ["add"]);
      addBtn.onclick = () => void this.addItem(item.id);
      browser.append(
        h("div", { class: "browser-item", "data-id": item.id }, [itemLabel(item), addBtn]),
      );
    }
    this.root.append(browser);
  }
}

// ---------------------------------------------------------------------------
// Recommendation panel
// ---------------------------------------------------------------------------

export class RecommendPanel {
  guard = new RequestGuard();
  method: (typeof METHODS)[number] = "partial_bs";
  width = 3;
  topK = 10;
  seed = 0;
  busy = false;

  constructor(
    public root: HTMLElement,
    public client: ServiceClient,
    public state: ClosetState,
  ) {
    state.onChange(() => this.render());
    this.render();
  }

  /** The reason recommendations cannot run right now, or null. */
  disabledReason(): string | null {
    if (!this.state.closetId) return "create a closet first";
    const pool = this.state.pool();
    if (pool.length === 0) return "the closet pool is empty";
    if (!this.state.poolHasPart("feet")) {
      return "every outfit needs footwear: the pool has no feet items";
    }
    return null;
  }

  async run(): Promise<void> {
    const reason = this.disabledReason();
    if (reason) return;
    const id = this.guard.next();
    this.busy = true;
    this.render();
    try {
      const resp = await this.client.recommend({
        pool: this.state.pool(),
        method: this.method,
        beam_width: this.width,
        top_k: this.topK,
        seed: this.seed,
      });
      if (!this.guard.isCurrent(id)) return; // stale response: discard
      this.state.setCards(resp.outfits);
    } catch (err) {
      if (this.guard.isCurrent(id)) {
        notice(this.root, err instanceof ApiError ? err.message : String(err));
      }
    } finally {
      if (this.guard.isCurrent(id)) {
        this.busy = false;
        this.render();
      }
    }
  }

  card(cardState: { outfit: RecommendedOutfit; stale: boolean }): HTMLElement {
    const { outfit, stale } = cardState;
    const members: (Node | string)[] = [];
    for (const part of MAIN_PARTS) {
      const itemId = outfit.slots[part];
      if (!itemId) continue;
      const item = this.state.items.get(itemId);
      members.push(h("li", {}, [`${part}: `, item ? itemLabel(item) : itemId]));
    }
    for (const accId of outfit.accessories) {
      const item = this.state.items.get(accId);
      members.push(h("li", {}, ["accessory: ", item ? itemLabel(item) : accId]));
    }
    const why = h("details", { class: "why" }, [
      h("summary", {}, ["why"]),
      h("ul", {}, members),
      h("p", {}, [`grader score ${outfit.score.toFixed(4)}`]),
    ]);
    return h(
      "div",
      { class: stale ? "card stale" : "card", "data-rank": String(outfit.rank) },
      [
        h("span", { class: "rank" }, [`#${outfit.rank}`]),
        h("span", { class: "score" }, [outfit.score.toFixed(4)]),
        h("span", { class: "config-badge" }, [
          CONFIGURATION_LABELS[outfit.configuration] ?? String(outfit.configuration),
        ]),
        ...(stale ? [h("span", { class: "stale-flag" }, ["stale: closet changed"])] : []),
        why,
      ],
    );
  }

  render(): void {
    const controls = h("div", { class: "controls" });
    const methodSel = h("select", { id: "method" }) as HTMLSelectElement;
    for (const m of METHODS) {
      const opt = h("option", { value: m }, [m]) as HTMLOptionElement;
      if (m === this.method) opt.selected = true;
      methodSel.append(opt);
    }
    methodSel.onchange = () => {
      this.method = methodSel.value as (typeof METHODS)[number];
    };
    const widthInput = h("input", {
      id: "width", type: "number", min: "1", max: "10", value: String(this.width),
    }) as HTMLInputElement;
    widthInput.onchange = () => {
      this.width = Math.max(1, Number(widthInput.value) || 3);
    };
    const seedInput = h("input", {
      id: "seed", type: "number", value: String(this.seed),
    }) as HTMLInputElement;
    seedInput.onchange = () => {
      this.seed = Number(seedInput.value) || 0;
    };
    const runBtn = h("button", { id: "run-recommend" }, [
      this.busy ? "working..." : "recommend",
    ]) as HTMLButtonElement;
    const reason = this.disabledReason();
    if (reason || this.busy) runBtn.disabled = true;
    runBtn.onclick = () => void this.run();
    controls.append(
      h("label", {}, ["method ", methodSel]),
      h("label", {}, ["beam width ", widthInput]),
      h("label", {}, ["seed ", seedInput]),
      runBtn,
    );

    const children: (Node | string)[] = [h("div", { class: "notice hidden" }), controls];
    if (reason) {
      children.push(h("p", { class: "disabled-reason" }, [reason]));
    }
    const visible = this.state.visibleCards();
    if (this.state.pinned.size > 0) {
      children.push(
        h("p", { class: "filter-note" }, [
          `filtered view: only outfits containing ${[...this.state.pinned].join(", ")}`,
        ]),
      );
    }
    if (this.state.filteredOut > 0 && visible.length === 0) {
      children.push(
        h("p", { class: "pin-warning" }, [
          "warning: no recommended outfit contains the pinned items",
        ]),
      );
    }
    const list = h("div", { class: "cards" });
    for (const card of visible) list.append(this.card(card));
    if (!visible.length && !this.state.cards.length) {
      list.append(h("p", { class: "empty-state" }, ["no recommendations yet"]));
    }
    children.push(list);
    this.root.replaceChildren(...children);
  }
}

// ---------------------------------------------------------------------------
// Score probe
// ---------------------------------------------------------------------------

export class ScoreProbe {
  assembly: Assembly = emptyAssembly();
  guard = new RequestGuard();
  lastScore: number | null = null;
  lastError = "";

  constructor(
    public root: HTMLElement,
    public client: ServiceClient,
    public state: ClosetState,
  ) {
    state.onChange(() => this.render());
    this.render();
  }

  /** Place an item; returns the violated rule name when blocked. */
  tryPlace(item: ItemInfo): string | null {
    const error = placementError(item, this.assembly);
    if (error) {
      this.lastError = error;
      this.render();
      return error;
    }
    this.lastError = "";
    this.assembly = place(item, this.assembly);
    void this.refreshScore();
    return null;
  }

  removeItem(itemId: string): void {
    this.assembly = removeFromAssembly(itemId, this.assembly);
    this.lastError = "";
    void this.refreshScore();
  }

  clear(): void {
    this.assembly = emptyAssembly();
    this.lastError = "";
    void this.refreshScore();
  }

  async refreshScore(): Promise<void> {
    const id = this.guard.next();
    const wire = assemblyWire(this.assembly);
    try {
      const score = await this.client.score(wire.slots, wire.accessories, true);
      if (!this.guard.isCurrent(id)) return;
      this.lastScore = score.positive_probability;
    } catch (err) {
      if (!this.guard.isCurrent(id)) return;
      this.lastScore = null;
      this.lastError = err instanceof ApiError ? err.message : String(err);
    }
    this.render();
  }

  render(): void {
    const slotsView = h("div", { class: "probe-slots" });
    for (const part of MAIN_PARTS) {
      const item = this.assembly.slots[part];
      const cell = h("div", { class: "probe-slot", "data-part": part }, [
        h("span", { class: "slot-name" }, [part]),
      ]);
      if (item) {
        const rm = h("button", { class: "remove", "data-id": item.id }, ["x"]);
        rm.onclick = () => this.removeItem(item.id);
        cell.append(itemLabel(item), rm);
      } else {
        cell.append(h("span", { class: "slot-empty" }, ["empty"]));
      }
      slotsView.append(cell);
    }
    const accView = h("div", { class: "probe-accessories" }, [
      h("span", { class: "slot-name" }, ["accessories"]),
    ]);
    for (const acc of this.assembly.accessories) {
      const rm = h("button", { class: "remove", "data-id": acc.id }, ["x"]);
      rm.onclick = () => this.removeItem(acc.id);
      accView.append(h("span", { class: "probe-acc" }, [itemLabel(acc), rm]));
    }

    const scoreText =
      this.lastScore === null ? "score: -" : `score: ${this.lastScore.toFixed(4)}`;
    const coverage = covers(this.assembly)
      ? ""
      : " (incomplete: an outfit needs upper+lower or a full-body item)";

    const picker = h("div", { class: "probe-picker" }, [h("h3", {}, ["Closet items"])]);
    for (const id of this.state.closetItemIds) {
      const item = this.state.items.get(id);
      if (!item) continue;
      const btn = h("button", { class: "place", "data-id": item.id }, ["place"]);
      btn.onclick = () => void this.tryPlace(item);
      picker.append(h("div", { class: "picker-item", "data-id": item.id }, [
        itemLabel(item), btn,
      ]));
    }

    const clearBtn = h("button", { id: "probe-clear" }, ["clear all"]);
    clearBtn.onclick = () => this.clear();

    this.root.replaceChildren(
      h("div", { class: `notice error${this.lastError ? "" : " hidden"}` }, [this.lastError]),
      h("p", { class: "probe-score" }, [scoreText + coverage]),
      slotsView,
      accView,
      clearBtn,
      picker,
    );
  }
}
