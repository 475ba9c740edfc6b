/**
 * Wallet UI: login, card generation, QR display, demo counterparty,
 * PIN-gated live approvals.
 *
 * Rendering is plain DOM. The pending-approvals list only re-renders when
 * its set of sessions changes so a half-typed PIN survives poll cycles.
 */

import { ApiError, SessionExpired, formatMoney, parseMoney } from "./api.js";
import type { WalletApi } from "./api.js";
import type { CardSummary, PendingApproval } from "./api.js";
import { droppedPending, initialState, WalletViewState } from "./state.js";

export interface WalletOptions {
  pollWaitSeconds: number;
  pollIntervalMs: number;
  outcomeTimeoutMs: number;
}

const DEFAULTS: WalletOptions = { pollWaitSeconds: 20, pollIntervalMs: 250, outcomeTimeoutMs: 30_000 };

const GENERIC_LOGIN_FAILURE = "Login failed. Check your username and password.";

export class Wallet {
  readonly state: WalletViewState = initialState();
  private readonly options: WalletOptions;
  private polling = false;
  private pollTimer: ReturnType<typeof setTimeout> | null = null;
  private renderedPendingIds = "";
  private readonly locallyResolved = new Set<string>();

  constructor(
    private readonly root: HTMLElement,
    private readonly api: WalletApi,
    options: Partial<WalletOptions> = {},
  ) {
    this.options = { ...DEFAULTS, ...options };
    this.renderShell();
  }

  // -- screens ----------------------------------------------------------

  private renderShell(): void {
    this.root.innerHTML = `
      <div class="wallet-app">
        <header><h1>Cardless Wallet</h1><div id="notice" class="notice" hidden></div></header>
        <section id="login-screen">
          <h2>Bank Login</h2>
          <form id="login-form">
            <label>Username <input id="login-username" autocomplete="username" /></label>
            <label>Password <input id="login-password" type="password" autocomplete="current-password" /></label>
            <button type="submit">Log in</button>
            <div id="login-error" class="error" hidden></div>
          </form>
        </section>
        <section id="wallet-screen" hidden>
          <div id="banner" class="banner" hidden></div>
          <h2>My Cards</h2>
          <ul id="cards-list" class="cards"></ul>
          <form id="gen-form" class="panel">
            <h3>Generate Card</h3>
            <label>Usage
              <select id="gen-usage">
                <option value="one_time">One-time</option>
                <option value="multi_use">Multi-use</option>
              </select>
            </label>
            <label>Spending limit ($) <input id="gen-limit" inputmode="decimal" /></label>
            <label>Valid for (hours) <input id="gen-validity" value="24" inputmode="numeric" /></label>
            <button type="submit">Generate Card</button>
            <div id="gen-error" class="error" hidden></div>
          </form>
          <form id="demo-form" class="panel">
            <h3>Demo Counterparty</h3>
            <p class="hint">Plays the merchant/ATM so one person can exercise the whole loop.</p>
            <label>Card <select id="demo-card"></select></label>
            <label>Type
              <select id="demo-kind">
                <option value="merchant">Merchant</option>
                <option value="atm">ATM</option>
              </select>
            </label>
            <label>Amount ($) <input id="demo-amount" inputmode="decimal" /></label>
            <button type="submit">Pay / Withdraw</button>
            <div id="demo-error" class="error" hidden></div>
          </form>
          <h2>Pending Approvals</h2>
          <ul id="pending-list" class="pending"></ul>
          <button id="logout-btn" type="button">Log out</button>
        </section>
      </div>`;

    this.element("login-form").addEventListener("submit", (event) => {
      event.preventDefault();
      void this.submitLogin();
    });
    this.element("gen-form").addEventListener("submit", (event) => {
      event.preventDefault();
      void this.submitGenerateCard();
    });
    this.element("demo-form").addEventListener("submit", (event) => {
      event.preventDefault();
      void this.submitDemoPayment();
    });
    this.element("logout-btn").addEventListener("click", () => this.logout());
  }

  private element<T extends HTMLElement = HTMLElement>(id: string): T {
    const node = this.root.querySelector(`#${id}`);
    if (!node) throw new Error(`missing element #${id}`);
    return node as T;
  }

  private input(id: string): HTMLInputElement {
    return this.element<HTMLInputElement>(id);
  }

  private setText(id: string, text: string | null): void {
    const node = this.element(id);
    if (text === null) {
      node.hidden = true;
      node.textContent = "";
    } else {
      node.hidden = false;
      node.textContent = text;
    }
  }

  // -- auth -------------------------------------------------------------

  async submitLogin(): Promise<void> {
    const username = this.input("login-username").value.trim();
    const password = this.input("login-password").value;
    this.setText("login-error", null);
    try {
      await this.api.login(username, password);
    } catch (error) {
      // One generic message: the server refuses to say which part was wrong.
      this.setText("login-error", GENERIC_LOGIN_FAILURE);
      return;
    }
    this.input("login-password").value = "";
    this.state.auth = { kind: "logged_in", username };
    this.element("login-screen").hidden = true;
    this.element("wallet-screen").hidden = false;
    await this.refreshCards();
    this.startPolling();
  }

  logout(): void {
    this.api.logout();
    this.stop();
    this.state.auth = { kind: "logged_out" };
    this.state.cards = [];
    this.state.pending = [];
    this.element("wallet-screen").hidden = true;
    this.element("login-screen").hidden = false;
  }

  private handleSessionLoss(): void {
    this.stop();
    this.state.auth = { kind: "logged_out" };
    this.element("wallet-screen").hidden = true;
    this.element("login-screen").hidden = false;
    this.setText("login-error", "Session expired. Please log in again.");
  }

  // -- cards ------------------------------------------------------------

  async refreshCards(): Promise<void> {
    try {
      this.state.cards = await this.api.listCards();
    } catch (error) {
      if (error instanceof SessionExpired) return this.handleSessionLoss();
      throw error;
    }
    this.renderCards();
  }

  private renderCards(): void {
    const list = this.element("cards-list");
    list.innerHTML = "";
    for (const card of this.state.cards) {
      const item = document.createElement("li");
      item.dataset.tokenId = card.token_id;
      item.className = `card state-${card.state}`;
      item.innerHTML = `
        <div class="card-pan"></div>
        <div class="card-meta"></div>
        <div class="card-qr"><code></code></div>`;
      (item.querySelector(".card-pan") as HTMLElement).textContent = card.masked_pan;
      (item.querySelector(".card-meta") as HTMLElement).textContent =
        `${card.usage === "one_time" ? "one-time" : "multi-use"} · limit ${formatMoney(card.limit_minor_units)} · ${card.state}`;
      (item.querySelector(".card-qr code") as HTMLElement).textContent = card.qr_payload;
      list.appendChild(item);
    }
    const select = this.element<HTMLSelectElement>("demo-card");
    select.innerHTML = "";
    for (const card of this.state.cards.filter((c) => c.state === "active")) {
      const option = document.createElement("option");
      option.value = card.token_id;
      option.textContent = `${card.masked_pan} (${formatMoney(card.limit_minor_units)})`;
      select.appendChild(option);
    }
  }

  async submitGenerateCard(): Promise<void> {
    this.setText("gen-error", null);
    const usage = this.element<HTMLSelectElement>("gen-usage").value;
    const limit = parseMoney(this.input("gen-limit").value);
    const hours = Number.parseFloat(this.input("gen-validity").value);
    if (limit === null) {
      this.setText("gen-error", "Enter a spending limit greater than zero.");
      return;
    }
    if (!Number.isFinite(hours) || hours <= 0) {
      this.setText("gen-error", "Enter a validity period greater than zero.");
      return;
    }
    try {
      await this.api.createCard(usage, limit, Math.round(hours * 3600));
    } catch (error) {
      if (error instanceof SessionExpired) return this.handleSessionLoss();
      this.setText("gen-error", error instanceof ApiError ? error.message : "Card generation failed.");
      return;
    }
    this.input("gen-limit").value = "";
    await this.refreshCards();
  }

  // -- demo counterparty --------------------------------------------------

  async submitDemoPayment(): Promise<void> {
    this.setText("demo-error", null);
    const tokenId = this.element<HTMLSelectElement>("demo-card").value;
    const kind = this.element<HTMLSelectElement>("demo-kind").value;
    const amount = parseMoney(this.input("demo-amount").value);
    const card = this.state.cards.find((c) => c.token_id === tokenId);
    if (!card) {
      this.setText("demo-error", "Pick a card first.");
      return;
    }
    if (amount === null) {
      this.setText("demo-error", "Enter an amount greater than zero.");
      return;
    }
    const counterparty =
      kind === "atm"
        ? { kind: "atm", id: "demo-atm", category: "cash" }
        : { kind: "merchant", id: "demo-merchant", category: "retail" };
    try {
      const result = await this.api.presentCard(card.qr_payload, counterparty, amount);
      if (result.outcome !== "pending") {
        this.showBanner(result.outcome);
      }
    } catch (error) {
      this.setText("demo-error", error instanceof ApiError ? error.message : "Payment request failed.");
    }
  }

  // -- approvals ----------------------------------------------------------

  startPolling(): void {
    if (this.polling) return;
    this.polling = true;
    void this.pollLoop();
  }

  stop(): void {
    this.polling = false;
    if (this.pollTimer !== null) {
      clearTimeout(this.pollTimer);
      this.pollTimer = null;
    }
  }

  private async pollLoop(): Promise<void> {
    while (this.polling) {
      try {
        const pending = await this.api.pollApprovals(this.options.pollWaitSeconds);
        const dropped = droppedPending(this.state.pending, pending, this.locallyResolved);
        if (dropped.length > 0) {
          this.setText(
            "notice",
            `Approval request timed out for ${dropped.map((p) => formatMoney(p.amount_minor_units)).join(", ")}.`,
          );
        }
        for (const id of Array.from(this.locallyResolved)) {
          if (!pending.some((p) => p.session_id === id)) this.locallyResolved.delete(id);
        }
        this.state.pending = pending;
        this.renderPending();
      } catch (error) {
        if (error instanceof SessionExpired) return this.handleSessionLoss();
        // transient network failure: back off one interval and retry
      }
      if (!this.polling) return;
      await new Promise<void>((resolve) => {
        this.pollTimer = setTimeout(resolve, this.options.pollIntervalMs);
      });
    }
  }

  private renderPending(): void {
    const ids = this.state.pending.map((p) => p.session_id).join(",");
    if (ids === this.renderedPendingIds) return;
    this.renderedPendingIds = ids;
    const list = this.element("pending-list");
    list.innerHTML = "";
    for (const item of this.state.pending) {
      list.appendChild(this.renderPendingItem(item));
    }
  }

  private renderPendingItem(item: PendingApproval): HTMLLIElement {
    const node = document.createElement("li");
    node.dataset.sessionId = item.session_id;
    node.className = "approval";
    node.innerHTML = `
      <div class="approval-summary"></div>
      <label>PIN <input class="pin-input" type="password" inputmode="numeric" maxlength="6" /></label>
      <button type="button" class="approve-btn">Approve</button>
      <button type="button" class="decline-btn">Decline</button>
      <div class="approval-error error" hidden></div>`;
    (node.querySelector(".approval-summary") as HTMLElement).textContent =
      `${item.counterparty.kind} ${item.counterparty.id} requests ${formatMoney(item.amount_minor_units)}`;
    (node.querySelector(".approve-btn") as HTMLElement).addEventListener("click", () => {
      void this.resolve(node, item, "approve");
    });
    (node.querySelector(".decline-btn") as HTMLElement).addEventListener("click", () => {
      void this.resolve(node, item, "decline");
    });
    return node;
  }

  private async resolve(node: HTMLElement, item: PendingApproval, decision: "approve" | "decline"): Promise<void> {
    const pinInput = node.querySelector(".pin-input") as HTMLInputElement;
    const errorNode = node.querySelector(".approval-error") as HTMLElement;
    errorNode.hidden = true;
    const pin = pinInput.value;
    pinInput.value = ""; // never keep a PIN around after submission
    try {
      await this.api.resolveApproval(item.session_id, decision, pin);
    } catch (error) {
      if (error instanceof SessionExpired) return this.handleSessionLoss();
      if (error instanceof ApiError && error.status === 403) {
        errorNode.textContent = "PIN rejected. Try again.";
        errorNode.hidden = false;
        return; // the request stays pending server-side
      }
      errorNode.textContent = error instanceof ApiError ? error.message : "Could not submit decision.";
      errorNode.hidden = false;
      return;
    }
    this.locallyResolved.add(item.session_id);
    await this.awaitOutcome(item.session_id);
    await this.refreshCards(); // a one-time card may have just retired
  }

  private async awaitOutcome(sessionId: string): Promise<void> {
    const deadline = Date.now() + this.options.outcomeTimeoutMs;
    while (Date.now() < deadline) {
      try {
        const trace = await this.api.sessionTrace(sessionId);
        if (trace.outcome !== "pending") {
          this.showBanner(trace.outcome);
          return;
        }
      } catch (error) {
        if (error instanceof SessionExpired) return this.handleSessionLoss();
      }
      await new Promise((resolve) => setTimeout(resolve, 150));
    }
    this.showBanner("Still processing; check back shortly.");
  }

  private showBanner(outcome: string): void {
    this.state.lastOutcome = outcome;
    const banner = this.element("banner");
    banner.hidden = false;
    banner.textContent = outcome;
    banner.className = outcome === "Payment completed successfully!" ? "banner success" : "banner failure";
  }
}

export function createWallet(root: HTMLElement, api: WalletApi, options: Partial<WalletOptions> = {}): Wallet {
  return new Wallet(root, api, options);
}
