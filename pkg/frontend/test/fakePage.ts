import type { PageAnchor, PageEnvironment } from '../src/types.js';

export interface PostCall {
  path: string;
  body: Uint8Array;
  contentType: string;
}

export interface FakePageOptions {
  href?: string;
  viewport?: { width: number; height: number };
  pageHeight?: number;
  connection?: string;
  anchors?: PageAnchor[];
  diagonal?: number;
  /** Number of initial post attempts that reject. */
  failPosts?: number;
  rasterizeThrows?: boolean;
}

/**
 * Deterministic page stand-in: pixel values are a fixed function of
 * coordinates, timers and load events fire only when the test says so.
 */
export class FakePage implements PageEnvironment {
  location: { href: string };
  viewport: { width: number; height: number };
  screenDiagonalInches?: number;
  pageHeight: number;
  posts: PostCall[] = [];
  postAttempts = 0;
  loadHandlers: Array<() => void> = [];
  private timers: Array<{ callback: () => void; delayMs: number }> = [];
  private options: FakePageOptions;

  constructor(options: FakePageOptions = {}) {
    this.options = options;
    this.location = { href: options.href ?? 'http://www.a.com/' };
    this.viewport = options.viewport ?? { width: 16, height: 24 };
    this.pageHeight = options.pageHeight ?? 48;
    this.screenDiagonalInches = options.diagonal;
  }

  connectionType(): string {
    return this.options.connection ?? 'wifi';
  }

  anchors(): PageAnchor[] {
    return this.options.anchors ?? [];
  }

  rasterize(width: number, height: number): Uint8Array {
    if (this.options.rasterizeThrows) {
      throw new Error('render failed');
    }
    const out = new Uint8Array(width * height * 4);
    for (let y = 0; y < height; y++) {
      for (let x = 0; x < width; x++) {
        const i = (y * width + x) * 4;
        out[i] = (x * 7 + y * 13) % 256;
        out[i + 1] = (x * 31 + y * 3) % 256;
        out[i + 2] = (x + y * 91) % 256;
        out[i + 3] = 255;
      }
    }
    return out;
  }

  onLoadComplete(callback: () => void): void {
    this.loadHandlers.push(callback);
  }

  schedule(callback: () => void, delayMs: number): void {
    this.timers.push({ callback, delayMs });
  }

  async post(path: string, body: Uint8Array, contentType: string) {
    this.postAttempts += 1;
    if (this.options.failPosts && this.postAttempts <= this.options.failPosts) {
      throw new Error('network down');
    }
    this.posts.push({ path, body, contentType });
    return { status: 200 };
  }

  fireLoad(): void {
    for (const handler of [...this.loadHandlers]) {
      handler();
    }
  }

  /** Run every pending timer; returns the delays that were flushed. */
  async flushTimers(): Promise<number[]> {
    const pending = this.timers.splice(0);
    for (const t of pending) {
      t.callback();
    }
    // Let the fire-and-forget post chains settle.
    for (let i = 0; i < 8; i++) {
      await Promise.resolve();
    }
    return pending.map((t) => t.delayMs);
  }
}
