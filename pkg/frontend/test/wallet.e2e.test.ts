/**
 * Scripted browser test: the wallet DOM against a live gateway process.
 *
 * Covers the full human loop: login, card generation, a demo-counterparty
 * purchase, the pending approval appearing without reload, PIN entry, and
 * both outcome banners.
 */

import { afterAll, afterEach, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { createWallet, Wallet } from "../src/ui.js";
import { startGateway, type LiveGateway } from "./gateway.js";
import { click, setInput, submitForm, text, waitFor } from "./helpers.js";

let gateway: LiveGateway;
let root: HTMLElement;
let wallet: Wallet;

beforeAll(async () => {
  gateway = await startGateway(8621);
});

afterAll(() => {
  gateway.stop();
});

afterEach(() => {
  wallet?.stop();
  root?.remove();
});

function mountWallet(): Wallet {
  root = document.createElement("div");
  document.body.appendChild(root);
  const client = new ApiClient(gateway.baseUrl, (input, init) => fetch(input, init));
  wallet = createWallet(root, client, { pollWaitSeconds: 1, pollIntervalMs: 100 });
  return wallet;
}

async function login(username = "demo", password = "demo-pass"): Promise<void> {
  setInput(root, "login-username", username);
  setInput(root, "login-password", password);
  submitForm(root, "login-form");
  await waitFor(() => !(root.querySelector("#wallet-screen") as HTMLElement).hidden, 15_000, "wallet screen");
}

function listedTokenIds(): string[] {
  return Array.from(root.querySelectorAll("#cards-list li")).map(
    (li) => (li as HTMLElement).dataset.tokenId ?? "",
  );
}

async function generateCard(limit: string): Promise<string> {
  const before = new Set(listedTokenIds());
  setInput(root, "gen-limit", limit);
  setInput(root, "gen-validity", "24");
  submitForm(root, "gen-form");
  await waitFor(() => listedTokenIds().length === before.size + 1, 15_000, "new card listed");
  const added = listedTokenIds().find((id) => !before.has(id));
  expect(added).toBeTruthy();
  return added!;
}

async function payViaDemoPanel(tokenId: string, amount: string): Promise<HTMLElement> {
  (root.querySelector("#demo-card") as HTMLSelectElement).value = tokenId;
  setInput(root, "demo-amount", amount);
  submitForm(root, "demo-form");
  return waitFor(
    () => root.querySelector("#pending-list li") as HTMLElement | null,
    15_000,
    "pending approval to appear",
  );
}

describe("wallet end-to-end", () => {
  it("completes login, card generation, purchase, PIN approval, success banner", async () => {
    mountWallet();
    await login();

    const tokenId = await generateCard("100.00");
    const cardNode = root.querySelector(`#cards-list li[data-token-id="${tokenId}"]`) as HTMLElement;
    expect(text(cardNode as HTMLElement, ".card-pan")).toMatch(/^\d{6}\*{6}\d{4}$/);
    expect(text(cardNode as HTMLElement, ".card-qr code")).toMatch(/^cardless:\/\/v1\/[A-Za-z0-9_-]+$/);
    expect(text(cardNode as HTMLElement, ".card-meta")).toContain("$100.00");

    const pendingNode = await payViaDemoPanel(tokenId, "25.00");
    expect(text(pendingNode, ".approval-summary")).toContain("$25.00");

    const pin = pendingNode.querySelector(".pin-input") as HTMLInputElement;
    pin.value = "123456";
    click(pendingNode.querySelector(".approve-btn"));

    await waitFor(
      () => text(root, "#banner") === "Payment completed successfully!",
      25_000,
      "success banner",
    );
    // the one-time card retires after settlement
    await waitFor(
      () =>
        (root.querySelector(`#cards-list li[data-token-id="${tokenId}"]`) as HTMLElement).className.includes(
          "state-retired",
        ),
      15_000,
      "card retirement",
    );
  });

  it("shows the decline banner when the cardholder refuses", async () => {
    mountWallet();
    await login();
    const tokenId = await generateCard("50.00");
    const pendingNode = await payViaDemoPanel(tokenId, "10.00");

    const pin = pendingNode.querySelector(".pin-input") as HTMLInputElement;
    pin.value = "123456";
    click(pendingNode.querySelector(".decline-btn"));

    await waitFor(() => text(root, "#banner") === "User approval failed!", 25_000, "decline banner");
  });

  it("rejects a wrong PIN inline and keeps the approval pending", async () => {
    mountWallet();
    await login();
    const tokenId = await generateCard("60.00");
    const pendingNode = await payViaDemoPanel(tokenId, "5.00");

    const pin = pendingNode.querySelector(".pin-input") as HTMLInputElement;
    pin.value = "000000";
    click(pendingNode.querySelector(".approve-btn"));

    await waitFor(() => !(pendingNode.querySelector(".approval-error") as HTMLElement).hidden, 10_000, "pin error");
    expect(text(pendingNode, ".approval-error")).toContain("PIN rejected");
    expect(root.querySelector(`#pending-list li[data-session-id="${pendingNode.dataset.sessionId}"]`)).not.toBeNull();
    expect(pin.value).toBe(""); // the PIN never lingers in the DOM

    pin.value = "123456";
    click(pendingNode.querySelector(".approve-btn"));
    await waitFor(() => text(root, "#banner") === "Payment completed successfully!", 25_000, "recovery banner");
  });

  it("shows one generic message for bad credentials and stays logged out", async () => {
    mountWallet();
    setInput(root, "login-username", "demo");
    setInput(root, "login-password", "wrong-password");
    submitForm(root, "login-form");
    await waitFor(() => !(root.querySelector("#login-error") as HTMLElement).hidden, 10_000, "login error");

    const wrongUser = text(root, "#login-error");
    setInput(root, "login-username", "nobody-here");
    setInput(root, "login-password", "wrong-password");
    submitForm(root, "login-form");
    await waitFor(() => text(root, "#login-error") === wrongUser, 10_000, "same generic message");
    expect((root.querySelector("#wallet-screen") as HTMLElement).hidden).toBe(true);
  });
});
