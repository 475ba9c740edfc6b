/**
 * Typed client for the gateway HTTP API.
 *
 * The fetch implementation and base URL are injectable so the same client
 * drives the browser (same origin) and the test harness (absolute URL,
 * node fetch). All amounts are integer minor currency units.
 */

export interface CardSummary {
  token_id: string;
  masked_pan: string;
  usage: string;
  limit_minor_units: number;
  expires_at: number;
  state: string;
  qr_payload: string;
}

export interface PendingApproval {
  session_id: string;
  counterparty: { kind: string; id: string; category: string };
  amount_minor_units: number;
  requested_at: number;
}

export interface SessionTrace {
  session_id: string;
  outcome: string;
  fraud_score: number | null;
  amount_minor_units: number;
  events: Array<{ seq: number; timestamp: number; actor: string; phase: number; detail: Record<string, unknown> }>;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

/** 401 anywhere after login means the bearer session is gone. */
export class SessionExpired extends ApiError {
  constructor() {
    super(401, "session expired");
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** What the wallet needs from the gateway; ApiClient is the real one. */
export interface WalletApi {
  readonly authenticated: boolean;
  logout(): void;
  login(username: string, password: string): Promise<void>;
  createCard(usage: string, limitMinorUnits: number, validForSeconds: number): Promise<CardSummary>;
  listCards(): Promise<CardSummary[]>;
  pollApprovals(waitSeconds: number): Promise<PendingApproval[]>;
  resolveApproval(sessionId: string, decision: "approve" | "decline", pin: string): Promise<void>;
  sessionTrace(sessionId: string): Promise<SessionTrace>;
  presentCard(
    qrPayload: string,
    counterparty: { kind: string; id: string; category: string },
    amountMinorUnits: number,
  ): Promise<{ session_id: string; outcome: string }>;
}

export class ApiClient implements WalletApi {
  private token: string | null = null;

  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (input, init) => globalThis.fetch(input, init),
  ) {}

  get authenticated(): boolean {
    return this.token !== null;
  }

  logout(): void {
    this.token = null;
  }

  private async request(method: string, path: string, body?: unknown, authed = true): Promise<unknown> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (authed) {
      if (this.token === null) throw new SessionExpired();
      headers["Authorization"] = `Bearer ${this.token}`;
    }
    const response = await this.fetchImpl(this.baseUrl + path, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (response.status === 401 && authed) {
      this.token = null;
      throw new SessionExpired();
    }
    if (!response.ok) {
      let detail = `request failed (${response.status})`;
      try {
        const parsed = (await response.json()) as Record<string, unknown>;
        detail = String(parsed.error ?? parsed.detail ?? detail);
      } catch {
        /* non-JSON error body; keep the generic message */
      }
      throw new ApiError(response.status, detail);
    }
    return response.json();
  }

  async login(username: string, password: string): Promise<void> {
    const body = (await this.request("POST", "/api/login", { username, password }, false)) as {
      token: string;
    };
    this.token = body.token;
  }

  async createCard(usage: string, limitMinorUnits: number, validForSeconds: number): Promise<CardSummary> {
    return (await this.request("POST", "/api/cards", {
      usage,
      limit: limitMinorUnits,
      valid_for_seconds: validForSeconds,
    })) as CardSummary;
  }

  async listCards(): Promise<CardSummary[]> {
    const body = (await this.request("GET", "/api/cards")) as { cards: CardSummary[] };
    return body.cards;
  }

  async pollApprovals(waitSeconds: number): Promise<PendingApproval[]> {
    const body = (await this.request("GET", `/api/approvals?wait=${waitSeconds}`)) as {
      pending: PendingApproval[];
    };
    return body.pending;
  }

  async resolveApproval(sessionId: string, decision: "approve" | "decline", pin: string): Promise<void> {
    await this.request("POST", `/api/approvals/${sessionId}`, { decision, pin });
  }

  async sessionTrace(sessionId: string): Promise<SessionTrace> {
    return (await this.request("GET", `/api/sessions/${sessionId}/trace`)) as SessionTrace;
  }

  /** Merchant-side demo hook; unauthenticated by design. */
  async presentCard(
    qrPayload: string,
    counterparty: { kind: string; id: string; category: string },
    amountMinorUnits: number,
  ): Promise<{ session_id: string; outcome: string }> {
    return (await this.request("POST", "/sim/present", {
      qr_payload: qrPayload,
      counterparty,
      amount: amountMinorUnits,
    }, false)) as { session_id: string; outcome: string };
  }
}

export function formatMoney(minorUnits: number): string {
  return `$${(minorUnits / 100).toFixed(2)}`;
}

export function parseMoney(text: string): number | null {
  const value = Number.parseFloat(text);
  if (!Number.isFinite(value) || value <= 0) return null;
  return Math.round(value * 100);
}
