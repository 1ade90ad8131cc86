/** One hyperlink with its bounding rectangle in page coordinates. */
export interface LinkRect {
  url: string;
  left: number;
  top: number;
  right: number;
  bottom: number;
}

export type ConnectionGate = 'wifi-only' | 'always';

export interface HookConfig {
  /** Origin-relative path the snapshot payload is posted to. */
  postPath: string;
  /** Capture height cap, as a multiple of the viewport height. */
  maxCaptureMultiplier: number;
  connectionGate: ConnectionGate;
  /** Idle delay after load-complete before the post fires, in ms. */
  idleDelayMs: number;
}

export const DEFAULT_CONFIG: HookConfig = {
  postPath: '/__ds/post',
  maxCaptureMultiplier: 2,
  connectionGate: 'wifi-only',
  idleDelayMs: 1000,
};

export function normalizeConfig(overrides: Partial<HookConfig> = {}): HookConfig {
  const config = { ...DEFAULT_CONFIG, ...overrides };
  if (!config.postPath.startsWith('/')) {
    throw new Error('postPath must be origin-relative');
  }
  if (config.maxCaptureMultiplier < 1) {
    throw new Error('maxCaptureMultiplier must be at least 1');
  }
  return config;
}

export interface PageAnchor {
  href: string;
  rect: { left: number; top: number; right: number; bottom: number };
}

/**
 * Everything the hook needs from the surrounding page. The browser
 * adapter backs this with the real DOM and a canvas; tests back it with
 * a deterministic fake so the whole pipeline runs headless.
 */
export interface PageEnvironment {
  location: { href: string };
  viewport: { width: number; height: number };
  /** Physical screen diagonal in inches, when the platform exposes it. */
  screenDiagonalInches?: number;
  pageHeight: number;
  /** 'wifi' | 'cellular' | 'unknown' */
  connectionType(): string;
  anchors(): PageAnchor[];
  /** Render the top-left width x height region of the page as RGBA rows. */
  rasterize(width: number, height: number): Uint8Array | Promise<Uint8Array>;
  /** Register additively; must never replace existing load handlers. */
  onLoadComplete(callback: () => void): void;
  schedule(callback: () => void, delayMs: number): void;
  post(
    path: string,
    body: Uint8Array,
    contentType: string,
  ): Promise<{ status: number }>;
}
