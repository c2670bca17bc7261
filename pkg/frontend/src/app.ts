import { ApiError, Client, ConflictError, NetworkError } from "./api.js";
import { featureGlyph } from "./glyph.js";
import { simulatedUserChoice } from "./policy.js";
import { sparklinePoints } from "./sparkline.js";
import {
  canSubmit,
  initialState,
  reduce,
  type UiEvent,
  type UiState,
} from "./state.js";
import type {
  HistoryPayload,
  ItemPayload,
  MetaPayload,
  SessionMode,
} from "./types.js";

const AUTOPLAY_DELAY_MS = 350;

function esc(text: string): string {
  return text.replace(/[&<>"']/g, (c) => `&#${c.charCodeAt(0)};`);
}

function chips(labels: Record<string, string>): string {
  return Object.entries(labels)
    .map(([a, v]) => `<span class="chip">${esc(a)}=${esc(v)}</span>`)
    .join("");
}

function itemCard(
  item: ItemPayload,
  extra: { classes?: string[]; caption?: string; actions?: string } = {},
): string {
  const cls = ["card", ...(extra.classes ?? [])].join(" ");
  return (
    `<div class="${cls}" data-item="${esc(item.id)}">` +
    (extra.caption ? `<div class="card-caption">${extra.caption}</div>` : "") +
    `<div class="glyph">${featureGlyph(item.features, item.id)}</div>` +
    `<div class="card-id">${esc(item.id)}</div>` +
    `<div class="chips">${chips(item.labels)}</div>` +
    (extra.actions ?? "") +
    `</div>`
  );
}

export class App {
  private state: UiState = initialState;
  private meta: MetaPayload | null = null;
  private galleryItems: ItemPayload[] = [];
  private galleryTotal = 0;
  private galleryOffset = 0;
  private galleryFilters: Record<string, string> = {};
  private pickedQuery: string | null = null;
  private history: HistoryPayload | null = null;
  private requestToken = 0;

  constructor(
    private readonly root: HTMLElement,
    private readonly client: Client = new Client(),
  ) {
    root.addEventListener("click", (e) => this.onClick(e));
    root.addEventListener("change", (e) => this.onChange(e));
  }

  async start(): Promise<void> {
    try {
      this.meta = await this.client.meta();
      await this.loadGallery(0);
    } catch (e) {
      this.root.innerHTML = `<div class="banner banner-network">` +
        `service unreachable: ${esc(describe(e))} ` +
        `<button data-action="boot-retry">retry</button></div>`;
      return;
    }
    this.render();
  }

  // ----------------------------------------------------------------- state

  private dispatch(event: UiEvent): void {
    const before = this.state;
    this.state = reduce(this.state, event);
    this.render();
    void this.runEffects(before);
  }

  private async runEffects(before: UiState): Promise<void> {
    const s = this.state;
    if (s.phase === before.phase && s.autoplay === before.autoplay) return;
    if (s.phase === "loading") await this.fetchCandidates();
    else if (s.phase === "submitting") await this.submitChoice();
    else if (s.phase === "choosing" && s.autoplay) this.scheduleAutoplay();
  }

  private async fetchCandidates(): Promise<void> {
    const session = this.state.session;
    if (!session) return;
    const token = ++this.requestToken;
    try {
      const candidates = await this.client.candidates(session.session_id);
      if (token !== this.requestToken) return;
      this.dispatch({ type: "candidates_loaded", candidates });
    } catch (e) {
      if (token !== this.requestToken) return;
      if (e instanceof ConflictError) {
        // the session finished server-side; pull its terminal state
        try {
          const refreshed = await this.client.session(session.session_id);
          this.dispatch({ type: "session_refreshed", session: refreshed });
        } catch (inner) {
          this.dispatch({
            type: "network_failed",
            during: "load",
            message: describe(inner),
          });
        }
      } else {
        this.dispatch({
          type: "network_failed",
          during: "load",
          message: describe(e),
        });
      }
    }
  }

  private async submitChoice(): Promise<void> {
    const { session, candidates, accepted, chosen } = this.state;
    if (!session || !candidates) return;
    const token = ++this.requestToken;
    try {
      const result = await this.client.postChoice(
        session.session_id,
        candidates.step,
        accepted,
        chosen,
      );
      if (token !== this.requestToken) return;
      this.dispatch({ type: "choice_applied", result });
    } catch (e) {
      if (token !== this.requestToken) return;
      if (e instanceof ConflictError) {
        this.dispatch({ type: "conflicted", message: e.detail });
      } else {
        this.dispatch({
          type: "network_failed",
          during: "submit",
          message: describe(e),
        });
      }
    }
  }

  private scheduleAutoplay(): void {
    const payload = this.state.candidates;
    if (!payload) return;
    setTimeout(() => {
      const s = this.state;
      if (!s.autoplay || s.phase !== "choosing" || s.candidates !== payload) {
        return;
      }
      const auto = simulatedUserChoice(payload);
      for (const id of auto.accepted) {
        this.dispatch({ type: "toggle_accept", id });
      }
      if (auto.chosen !== null) {
        this.dispatch({ type: "toggle_chosen", id: auto.chosen });
      }
      this.dispatch({ type: "submitted" });
    }, AUTOPLAY_DELAY_MS);
  }

  private async createSession(): Promise<void> {
    const mode = this.value("#new-mode", "sandbox") as SessionMode;
    const strategy = this.value("#new-strategy", "");
    const query = this.pickedQuery ?? "random";
    this.history = null;
    this.dispatch({ type: "create_requested" });
    try {
      const session = await this.client.createSession({
        query,
        mode,
        strategy: strategy || undefined,
      });
      this.dispatch({ type: "session_created", session });
    } catch (e) {
      this.state = { ...initialState };
      this.render();
      this.showTransientBanner(describe(e));
    }
  }

  private async loadGallery(offset: number): Promise<void> {
    const page = await this.client.items(this.galleryFilters, 24, offset);
    this.galleryItems = page.items;
    this.galleryTotal = page.total;
    this.galleryOffset = page.offset;
  }

  private async showHistory(): Promise<void> {
    const session = this.state.session;
    if (!session) return;
    try {
      this.history = await this.client.history(session.session_id);
    } catch (e) {
      this.showTransientBanner(describe(e));
      return;
    }
    this.render();
  }

  // ------------------------------------------------------------------ DOM

  private value(selector: string, fallback: string): string {
    const node = this.root.querySelector<HTMLSelectElement>(selector);
    return node ? node.value : fallback;
  }

  private showTransientBanner(message: string): void {
    const node = this.root.querySelector("#transient");
    if (node) node.innerHTML =
      `<div class="banner banner-network">${esc(message)}</div>`;
  }

  private onClick(e: Event): void {
    const target = (e.target as HTMLElement).closest<HTMLElement>(
      "[data-action]",
    );
    if (!target) return;
    const action = target.dataset.action as string;
    const id = target.dataset.id ?? "";
    switch (action) {
      case "boot-retry":
        void this.start();
        break;
      case "pick-query":
        this.pickedQuery = this.pickedQuery === id ? null : id;
        this.render();
        break;
      case "gallery-page":
        void this.loadGallery(Number(target.dataset.offset ?? 0)).then(() =>
          this.render(),
        );
        break;
      case "create":
        void this.createSession();
        break;
      case "accept":
        this.dispatch({ type: "toggle_accept", id });
        break;
      case "choose":
        this.dispatch({ type: "toggle_chosen", id });
        break;
      case "submit":
        this.dispatch({ type: "submitted" });
        break;
      case "reject-all":
        // clear any selection, then submit the empty round
        if (this.state.candidates) {
          this.dispatch({
            type: "candidates_loaded",
            candidates: this.state.candidates,
          });
          this.dispatch({ type: "submitted" });
        }
        break;
      case "retry": {
        const retry = this.state.banner?.retry;
        this.dispatch({ type: "retried" });
        // a failed load leaves the phase at "loading", so the reducer alone
        // cannot re-trigger the fetch
        if (retry === "load") void this.fetchCandidates();
        break;
      }
      case "autoplay":
        this.dispatch({ type: "autoplay_set", on: !this.state.autoplay });
        break;
      case "leave":
        this.history = null;
        this.pickedQuery = null;
        this.dispatch({ type: "left_session" });
        break;
      case "show-history":
        void this.showHistory();
        break;
    }
  }

  private onChange(e: Event): void {
    const target = e.target as HTMLElement;
    if (target instanceof HTMLSelectElement && target.dataset.filter) {
      const attr = target.dataset.filter;
      if (target.value) this.galleryFilters[attr] = target.value;
      else delete this.galleryFilters[attr];
      void this.loadGallery(0).then(() => this.render());
    }
  }

  private render(): void {
    const s = this.state;
    this.root.innerHTML =
      `<div id="transient"></div>` +
      this.renderBanner() +
      (s.phase === "gallery" || s.phase === "creating"
        ? this.renderGallery()
        : this.renderSession());
  }

  private renderBanner(): string {
    const banner = this.state.banner;
    if (!banner) return "";
    const label = banner.kind === "network" ? "connection lost" : "out of step";
    const retry =
      banner.kind === "network"
        ? `<button data-action="retry">retry</button>`
        : "";
    return (
      `<div class="banner banner-${banner.kind}">` +
      `<strong>${label}</strong> ${esc(banner.message)} ${retry}</div>`
    );
  }

  private renderGallery(): string {
    const meta = this.meta;
    if (!meta) return `<p>loading…</p>`;
    const filters = meta.attributes
      .map(
        (a) =>
          `<label>${esc(a.name)} <select data-filter="${esc(a.name)}">` +
          `<option value="">any</option>` +
          a.values
            .map(
              (v) =>
                `<option value="${esc(v)}"` +
                (this.galleryFilters[a.name] === v ? " selected" : "") +
                `>${esc(v)}</option>`,
            )
            .join("") +
          `</select></label>`,
      )
      .join(" ");
    const grid = this.galleryItems
      .map((item) =>
        itemCard(item, {
          classes: this.pickedQuery === item.id ? ["picked"] : [],
          actions:
            `<button class="card-pick" data-action="pick-query" ` +
            `data-id="${esc(item.id)}">` +
            (this.pickedQuery === item.id ? "query ✓" : "use as query") +
            `</button>`,
        }),
      )
      .join("");
    const prev = Math.max(this.galleryOffset - 24, 0);
    const next = this.galleryOffset + 24;
    const strategies = meta.strategies
      .map(
        (s) =>
          `<option value="${esc(s)}"` +
          (s === meta.default_strategy ? " selected" : "") +
          `>${esc(s)}</option>`,
      )
      .join("");
    const creating = this.state.phase === "creating";
    return (
      `<section class="gallery">` +
      `<h1>attrsearch</h1>` +
      `<p class="hint">Pick a starting item (or leave unpicked for a random ` +
      `query), then start a session. Sandbox sessions reveal a target to ` +
      `chase; live sessions keep it in your head.</p>` +
      `<div class="filters">${filters}</div>` +
      `<div class="grid">${grid}</div>` +
      `<div class="pager">` +
      `<button data-action="gallery-page" data-offset="${prev}"` +
      (this.galleryOffset === 0 ? " disabled" : "") +
      `>prev</button>` +
      `<span>${this.galleryOffset + 1}–` +
      `${Math.min(next, this.galleryTotal)} of ${this.galleryTotal}</span>` +
      `<button data-action="gallery-page" data-offset="${next}"` +
      (next >= this.galleryTotal ? " disabled" : "") +
      `>next</button></div>` +
      `<div class="new-session">` +
      `<label>mode <select id="new-mode">` +
      `<option value="sandbox">sandbox</option>` +
      `<option value="live">live</option></select></label>` +
      `<label>strategy <select id="new-strategy">${strategies}</select></label>` +
      `<button class="primary" data-action="create"` +
      (creating ? " disabled" : "") +
      `>${creating ? "starting…" : "start session"}</button>` +
      `</div></section>`
    );
  }

  private renderSession(): string {
    const s = this.state;
    const session = s.session;
    if (!session) return "";
    const busy = s.phase === "loading" || s.phase === "submitting";
    const header =
      `<header class="session-head">` +
      `<button data-action="leave">← gallery</button>` +
      `<span class="badge badge-${session.status}">${session.status}</span>` +
      `<span>step ${session.step}/${session.max_steps}</span>` +
      `<span>strategy ${esc(session.strategy)}</span>` +
      `<span>mode ${session.mode}</span>` +
      `</header>`;

    const historyStrip =
      `<div class="history-strip">` +
      session.query_history
        .map((id, i) => `<span class="crumb">${i ? "→ " : ""}${esc(id)}</span>`)
        .join("") +
      `</div>`;

    const query = itemCard(session.query_item, {
      classes: ["query"],
      caption: "current query",
    });

    let cards = "";
    if (s.phase === "choosing" && s.candidates) {
      cards = s.candidates.candidates
        .map((card) => {
          const id = card.item.id;
          const accepted = s.accepted.includes(id);
          const chosen = s.chosen === id;
          const classes = [
            accepted ? "accepted" : "rejected",
            chosen ? "chosen" : "",
          ].filter(Boolean);
          const dist =
            card.target_distance !== undefined
              ? `<div class="dist">d(target) ${card.target_distance.toFixed(4)}</div>`
              : "";
          return (
            `<div class="slot"><div class="slot-attr">${esc(card.attribute)}</div>` +
            itemCard(card.item, {
              classes,
              actions:
                dist +
                `<div class="card-actions">` +
                `<button data-action="accept" data-id="${esc(id)}">` +
                (accepted ? "✓ closer" : "closer?") +
                `</button>` +
                `<button data-action="choose" data-id="${esc(id)}"` +
                ` class="${chosen ? "star on" : "star"}">★</button>` +
                `</div>`,
            }) +
            `</div>`
          );
        })
        .join("");
    } else if (busy) {
      cards = `<p class="hint">${s.phase === "loading" ? "fetching candidates…" : "submitting…"}</p>`;
    }

    const actions =
      s.phase === "choosing"
        ? `<div class="round-actions">` +
          `<button class="primary" data-action="submit"` +
          (canSubmit(s) ? "" : " disabled") +
          `>submit</button>` +
          `<button data-action="reject-all">none is closer</button>` +
          (session.mode === "sandbox"
            ? `<button data-action="autoplay">` +
              (s.autoplay ? "stop auto-play" : "auto-play") +
              `</button>`
            : "") +
          `</div>`
        : "";

    const sandbox = this.renderSandboxPanel();
    const terminal =
      s.phase === "terminal"
        ? `<div class="terminal">` +
          `<p>session ${session.status} after ${session.step} step${session.step === 1 ? "" : "s"}.</p>` +
          `<button data-action="show-history">round history</button>` +
          `</div>` +
          this.renderHistory()
        : "";

    return (
      `<section class="session">` +
      header +
      historyStrip +
      `<div class="board">` +
      `<div class="column">${query}${sandbox}</div>` +
      `<div class="slots">${cards}</div>` +
      `</div>` +
      actions +
      terminal +
      `</section>`
    );
  }

  private renderSandboxPanel(): string {
    const session = this.state.session;
    if (!session || session.mode !== "sandbox" || !session.target_item) {
      return "";
    }
    const curve = session.rank_curve ?? [];
    const maxRank = this.meta?.n_items ?? Math.max(...curve, 2);
    const points = sparklinePoints(curve, 220, 48, maxRank);
    return (
      itemCard(session.target_item, {
        classes: ["target"],
        caption: "target (sandbox)",
      }) +
      `<div class="rank-panel">` +
      `<div>target rank ${session.target_rank} (started ${session.initial_rank})</div>` +
      `<svg class="sparkline" viewBox="0 0 220 48" preserveAspectRatio="none">` +
      `<polyline points="${points}" fill="none" stroke="currentColor" stroke-width="1.5"/>` +
      `</svg></div>`
    );
  }

  private renderHistory(): string {
    if (!this.history) return "";
    const rows = this.history.rounds
      .map(
        (r) =>
          `<tr><td>${r.step}</td>` +
          `<td>${r.presented.map((p) => esc(p.id)).join(", ")}</td>` +
          `<td>${r.accepted.map(esc).join(", ") || "—"}</td>` +
          `<td>${r.chosen ? esc(r.chosen) : "—"}</td>` +
          `<td>${r.rank_after ?? ""}</td></tr>`,
      )
      .join("");
    return (
      `<table class="history"><thead><tr>` +
      `<th>step</th><th>presented</th><th>accepted</th><th>chosen</th><th>rank</th>` +
      `</tr></thead><tbody>${rows}</tbody></table>`
    );
  }
}

function describe(e: unknown): string {
  if (e instanceof ApiError) return e.detail;
  if (e instanceof NetworkError) return "could not reach the service";
  return e instanceof Error ? e.message : String(e);
}

const rootNode = typeof document !== "undefined" && document.getElementById("app");
if (rootNode) {
  void new App(rootNode).start();
}
