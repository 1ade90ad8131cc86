import { encodePng } from './png.js';
import type { PageEnvironment } from './types.js';

export interface Snapshot {
  png: Uint8Array;
  width: number;
  height: number;
}

/**
 * Capture the top of the rendered page as a lossless PNG, cropped to
 * min(page height, multiplier x viewport height). Returns null on any
 * failure: the hook must never break the host page.
 */
export async function captureSnapshot(
  env: PageEnvironment,
  multiplier: number,
): Promise<Snapshot | null> {
  try {
    const width = env.viewport.width;
    const height = Math.min(env.pageHeight, Math.floor(multiplier * env.viewport.height));
    if (width <= 0 || height <= 0) {
      return null;
    }
    const rgba = await env.rasterize(width, height);
    return { png: encodePng(rgba, width, height), width, height };
  } catch {
    return null;
  }
}
