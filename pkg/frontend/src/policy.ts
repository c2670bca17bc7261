import type { CandidatesPayload } from "./types.js";

export interface AutoChoice {
  accepted: string[];
  chosen: string | null;
}

/**
 * The engine's simulated-user rule, restated over sandbox payload fields:
 * accept a card iff it is strictly closer to the target than the current
 * query, choose the accepted card with the smallest distance, ties by id.
 * Duplicate ids (the same item presented for two attributes) collapse to
 * one accept, matching the engine's set semantics.
 */
export function simulatedUserChoice(payload: CandidatesPayload): AutoChoice {
  const dQuery = payload.query_target_distance;
  if (dQuery === undefined) {
    throw new Error("simulated user needs sandbox target distances");
  }
  const accepted: string[] = [];
  let chosen: string | null = null;
  let best = Infinity;
  for (const card of payload.candidates) {
    const d = card.target_distance;
    if (d === undefined) {
      throw new Error(`card ${card.item.id} lacks target_distance`);
    }
    if (!(d < dQuery)) continue;
    const id = card.item.id;
    if (!accepted.includes(id)) accepted.push(id);
    if (d < best || (d === best && chosen !== null && id < chosen)) {
      best = d;
      chosen = id;
    }
  }
  return { accepted, chosen };
}
