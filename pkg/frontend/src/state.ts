import type {
  CandidatesPayload,
  ChoiceResult,
  SessionPayload,
} from "./types.js";

// The per-tab session state machine. The reducer is pure: the app layer
// performs the fetches a phase implies and feeds the outcomes back in as
// events. The server stays the source of truth; nothing here reorders or
// rescores candidates.

export type Phase =
  | "gallery"
  | "creating"
  | "loading"
  | "choosing"
  | "submitting"
  | "terminal";

export interface Banner {
  kind: "network" | "conflict";
  message: string;
  /** what to re-issue when the user hits retry */
  retry: "load" | "submit" | "create";
}

export interface UiState {
  phase: Phase;
  session: SessionPayload | null;
  candidates: CandidatesPayload | null;
  /** accept state per card, in presented order */
  accepted: string[];
  /** exactly one accepted card may be chosen */
  chosen: string | null;
  banner: Banner | null;
  autoplay: boolean;
}

export type UiEvent =
  | { type: "create_requested" }
  | { type: "session_created"; session: SessionPayload }
  | { type: "candidates_loaded"; candidates: CandidatesPayload }
  | { type: "toggle_accept"; id: string }
  | { type: "toggle_chosen"; id: string }
  | { type: "submitted" }
  | { type: "choice_applied"; result: ChoiceResult }
  | { type: "session_refreshed"; session: SessionPayload }
  | { type: "network_failed"; during: Banner["retry"]; message: string }
  | { type: "conflicted"; message: string }
  | { type: "retried" }
  | { type: "autoplay_set"; on: boolean }
  | { type: "left_session" };

export const initialState: UiState = {
  phase: "gallery",
  session: null,
  candidates: null,
  accepted: [],
  chosen: null,
  banner: null,
  autoplay: false,
};

function presentedIds(candidates: CandidatesPayload | null): string[] {
  if (!candidates) return [];
  const ids: string[] = [];
  for (const card of candidates.candidates) {
    if (!ids.includes(card.item.id)) ids.push(card.item.id);
  }
  return ids;
}

/** Submit needs either reject-all or exactly one chosen accepted card. */
export function canSubmit(state: UiState): boolean {
  if (state.phase !== "choosing") return false;
  if (state.accepted.length === 0) return state.chosen === null;
  return state.chosen !== null && state.accepted.includes(state.chosen);
}

export function reduce(state: UiState, event: UiEvent): UiState {
  switch (event.type) {
    case "create_requested":
      return { ...initialState, phase: "creating" };

    case "session_created": {
      const terminal = event.session.status !== "active";
      return {
        ...initialState,
        phase: terminal ? "terminal" : "loading",
        session: event.session,
      };
    }

    case "candidates_loaded":
      return {
        ...state,
        phase: "choosing",
        candidates: event.candidates,
        accepted: [],
        chosen: null,
        banner: null,
      };

    case "toggle_accept": {
      if (state.phase !== "choosing") return state;
      if (!presentedIds(state.candidates).includes(event.id)) return state;
      if (state.accepted.includes(event.id)) {
        return {
          ...state,
          accepted: state.accepted.filter((i) => i !== event.id),
          chosen: state.chosen === event.id ? null : state.chosen,
        };
      }
      return { ...state, accepted: [...state.accepted, event.id] };
    }

    case "toggle_chosen": {
      if (state.phase !== "choosing") return state;
      if (!presentedIds(state.candidates).includes(event.id)) return state;
      if (state.chosen === event.id) return { ...state, chosen: null };
      const accepted = state.accepted.includes(event.id)
        ? state.accepted
        : [...state.accepted, event.id];
      return { ...state, accepted, chosen: event.id };
    }

    case "submitted":
      if (!canSubmit(state)) return state;
      return { ...state, phase: "submitting", banner: null };

    case "choice_applied": {
      const session = event.result.session;
      return {
        ...state,
        phase: session.status === "active" ? "loading" : "terminal",
        session,
        candidates: null,
        accepted: [],
        chosen: null,
        banner: null,
        autoplay: session.status === "active" ? state.autoplay : false,
      };
    }

    case "session_refreshed": {
      const terminal = event.session.status !== "active";
      return {
        ...state,
        session: event.session,
        phase: terminal ? "terminal" : state.phase,
        autoplay: terminal ? false : state.autoplay,
      };
    }

    // the retry banner keeps every local selection intact
    case "network_failed":
      return {
        ...state,
        phase: event.during === "submit" ? "choosing" : state.phase,
        banner: { kind: "network", message: event.message, retry: event.during },
        autoplay: false,
      };

    // a conflicting submission means this tab is stale: drop the local
    // selection and pull the server's current round
    case "conflicted":
      return {
        ...state,
        phase: "loading",
        candidates: null,
        accepted: [],
        chosen: null,
        banner: { kind: "conflict", message: event.message, retry: "load" },
      };

    case "retried":
      if (!state.banner) return state;
      return {
        ...state,
        banner: null,
        phase: state.banner.retry === "submit" ? "submitting" : state.phase,
      };

    case "autoplay_set":
      if (state.session?.mode !== "sandbox") return state;
      return { ...state, autoplay: event.on };

    case "left_session":
      return { ...initialState };
  }
}
