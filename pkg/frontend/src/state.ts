// Shared app state: closet contents, pin/exclude sets, recommendation
// cards with stale tracking, and the in-flight request guard.

import type { ItemInfo, RecommendedOutfit } from "./types.js";

/**
 * Monotone request ids; responses for anything but the latest request
 * are discarded so a slow older reply can never clobber a newer one.
 */
export class RequestGuard {
  private latest = 0;

  next(): number {
    return ++this.latest;
  }

  isCurrent(id: number): boolean {
    return id === this.latest;
  }
}

export interface RecCard {
  outfit: RecommendedOutfit;
  stale: boolean;
}

export class ClosetState {
  items = new Map<string, ItemInfo>(); // corpus browsable items
  closetId: string | null = null;
  closetName = "";
  closetItemIds: string[] = [];
  pinned = new Set<string>();
  excluded = new Set<string>();
  cards: RecCard[] = [];
  filteredOut = 0; // cards hidden by the pin filter in the last render

  listeners: (() => void)[] = [];

  onChange(fn: () => void): void {
    this.listeners.push(fn);
  }

  notify(): void {
    for (const fn of this.listeners) fn();
  }

  setCloset(id: string, name: string, itemIds: string[]): void {
    this.closetId = id;
    this.closetName = name;
    this.closetItemIds = [...itemIds];
    this.notify();
  }

  setClosetItems(itemIds: string[]): void {
    this.closetItemIds = [...itemIds];
    this.notify();
  }

  /** Pinning an item lifts any exclusion: the sets stay disjoint. */
  pin(itemId: string): void {
    this.excluded.delete(itemId);
    this.pinned.add(itemId);
    this.notify();
  }

  unpin(itemId: string): void {
    this.pinned.delete(itemId);
    this.notify();
  }

  /** Excluding an item unpins it: the sets stay disjoint. */
  exclude(itemId: string): void {
    this.pinned.delete(itemId);
    this.excluded.add(itemId);
    this.notify();
  }

  unexclude(itemId: string): void {
    this.excluded.delete(itemId);
    this.notify();
  }

  /** Pool sent to the recommender: closet minus exclusions. */
  pool(): string[] {
    return this.closetItemIds.filter((id) => !this.excluded.has(id));
  }

  poolHasPart(part: string): boolean {
    return this.pool().some((id) => this.items.get(id)?.part === part);
  }

  setCards(outfits: RecommendedOutfit[]): void {
    this.cards = outfits.map((outfit) => ({ outfit, stale: false }));
    this.notify();
  }

  /** Cards whose outfits contain every pinned item; others are filtered. */
  visibleCards(): RecCard[] {
    if (this.pinned.size === 0) {
      this.filteredOut = 0;
      return this.cards;
    }
    const visible = this.cards.filter((card) => {
      const ids = new Set<string>([
        ...Object.values(card.outfit.slots),
        ...card.outfit.accessories,
      ]);
      for (const pin of this.pinned) {
        if (!ids.has(pin)) return false;
      }
      return true;
    });
    this.filteredOut = this.cards.length - visible.length;
    return visible;
  }

  /** Closet edits invalidate cards that still show the removed item. */
  removeFromCloset(itemId: string): void {
    this.closetItemIds = this.closetItemIds.filter((id) => id !== itemId);
    this.pinned.delete(itemId);
    this.excluded.delete(itemId);
    for (const card of this.cards) {
      const ids = new Set<string>([
        ...Object.values(card.outfit.slots),
        ...card.outfit.accessories,
      ]);
      if (ids.has(itemId)) card.stale = true;
    }
    this.notify();
  }

  addToCloset(itemId: string): void {
    if (!this.closetItemIds.includes(itemId)) {
      this.closetItemIds.push(itemId);
      this.notify();
    }
  }
}
