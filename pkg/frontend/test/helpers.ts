import { expect } from "vitest";

export async function waitFor<T>(probe: () => T | null | undefined | false, timeoutMs = 15_000, what = "condition"): Promise<T> {
  const deadline = Date.now() + timeoutMs;
  let last: unknown;
  while (Date.now() < deadline) {
    try {
      const value = probe();
      if (value) return value;
      last = value;
    } catch (error) {
      last = error;
    }
    await new Promise((resolve) => setTimeout(resolve, 50));
  }
  throw new Error(`timed out waiting for ${what}; last=${String(last)}`);
}

export function setInput(root: HTMLElement, id: string, value: string): void {
  const node = root.querySelector(`#${id}`) as HTMLInputElement | null;
  expect(node, `#${id}`).not.toBeNull();
  node!.value = value;
}

export function submitForm(root: HTMLElement, id: string): void {
  const form = root.querySelector(`#${id}`) as HTMLFormElement | null;
  expect(form, `#${id}`).not.toBeNull();
  form!.dispatchEvent(new Event("submit", { bubbles: true, cancelable: true }));
}

export function click(node: Element | null): void {
  expect(node).not.toBeNull();
  (node as HTMLElement).dispatchEvent(new Event("click", { bubbles: true, cancelable: true }));
}

export function text(root: HTMLElement, selector: string): string {
  return (root.querySelector(selector)?.textContent ?? "").trim();
}
