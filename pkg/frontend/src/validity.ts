// Client-side mirror of the outfit validity rules. The UI blocks edits
// that break these before anything reaches the service.

import { MAX_ACCESSORIES, MAIN_PARTS } from "./types.js";
import type { ItemInfo, PartName } from "./types.js";

export interface Assembly {
  slots: Partial<Record<PartName, ItemInfo>>;
  accessories: ItemInfo[];
}

export function emptyAssembly(): Assembly {
  return { slots: {}, accessories: [] };
}

function assemblyIds(a: Assembly): Set<string> {
  const ids = new Set<string>();
  for (const part of MAIN_PARTS) {
    const item = a.slots[part];
    if (item) ids.add(item.id);
  }
  for (const acc of a.accessories) ids.add(acc.id);
  return ids;
}

/**
 * The slot an item occupies when placed now: hybrids count as upper when
 * a non-hybrid outer layer is already present, otherwise as outer.
 */
export function targetSlot(item: ItemInfo, a: Assembly): PartName {
  if (item.part === "accessory") return "accessory";
  if (!item.hybrid) return item.part;
  const outer = a.slots["outer"];
  return outer && !outer.hybrid ? "upper" : "outer";
}

/**
 * The named rule an item placement would violate, or null when legal.
 * Mirrors the service's validity report codes.
 */
export function placementError(item: ItemInfo, a: Assembly): string | null {
  if (assemblyIds(a).has(item.id)) {
    return `duplicate_item: ${item.id} is already part of the outfit`;
  }
  if (item.part === "accessory") {
    if (a.accessories.length >= MAX_ACCESSORIES) {
      return `accessory_cap: at most ${MAX_ACCESSORIES} accessories`;
    }
    return null;
  }
  const slot = targetSlot(item, a);
  if (a.slots[slot]) {
    return `slot_cap: at most one ${slot} item`;
  }
  return null;
}

/** Apply a placement that has already passed placementError. */
export function place(item: ItemInfo, a: Assembly): Assembly {
  const next: Assembly = {
    slots: { ...a.slots },
    accessories: [...a.accessories],
  };
  if (item.part === "accessory") {
    next.accessories.push(item);
  } else {
    next.slots[targetSlot(item, a)] = item;
  }
  return next;
}

export function removeFromAssembly(itemId: string, a: Assembly): Assembly {
  const next: Assembly = { slots: {}, accessories: [] };
  for (const part of MAIN_PARTS) {
    const item = a.slots[part];
    if (item && item.id !== itemId) next.slots[part] = item;
  }
  next.accessories = a.accessories.filter((acc) => acc.id !== itemId);
  return next;
}

/** Coverage rule: (upper and lower) or full. Empty assemblies fail it. */
export function covers(a: Assembly): boolean {
  return (!!a.slots["upper"] && !!a.slots["lower"]) || !!a.slots["full"];
}

export function assemblyWire(a: Assembly): {
  slots: Record<string, string>;
  accessories: string[];
} {
  const slots: Record<string, string> = {};
  for (const part of MAIN_PARTS) {
    const item = a.slots[part];
    if (item) slots[part] = item.id;
  }
  return { slots, accessories: a.accessories.map((acc) => acc.id) };
}
