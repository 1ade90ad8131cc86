import { captureSnapshot } from './capture.js';
import { mineLinks } from './links.js';
import { encodeMultipart, type EncodedBody } from './multipart.js';
import {
  normalizeConfig,
  type HookConfig,
  type PageEnvironment,
} from './types.js';

const encoder = new TextEncoder();

/**
 * Assemble the full upload body: snapshot PNG plus link coordinates and
 * the device form factor, in the fixed part order the server expects.
 * Returns null when capture fails.
 */
export async function buildPayload(
  env: PageEnvironment,
  config: HookConfig,
  boundary?: string,
): Promise<EncodedBody | null> {
  const snapshot = await captureSnapshot(env, config.maxCaptureMultiplier);
  if (snapshot === null) {
    return null;
  }
  const links = mineLinks(env);
  const parts = new Map<string, Uint8Array>([
    ['image', snapshot.png],
    ['url', encoder.encode(env.location.href)],
    ['links', encoder.encode(JSON.stringify(links))],
    ['viewport_height', encoder.encode(String(env.viewport.height))],
    ['ff_width', encoder.encode(String(env.viewport.width))],
    ['ff_height', encoder.encode(String(env.viewport.height))],
  ]);
  if (env.screenDiagonalInches !== undefined) {
    parts.set('ff_diagonal', encoder.encode(String(env.screenDiagonalInches)));
  }
  return encodeMultipart(parts, boundary);
}

function gateAllows(env: PageEnvironment, config: HookConfig): boolean {
  if (config.connectionGate === 'always') {
    return true;
  }
  return env.connectionType() === 'wifi';
}

async function postOnce(env: PageEnvironment, config: HookConfig): Promise<void> {
  const payload = await buildPayload(env, config);
  if (payload === null) {
    return;
  }
  try {
    await env.post(config.postPath, payload.body, payload.contentType);
  } catch {
    // One retry on network failure, then give up silently.
    try {
      await env.post(config.postPath, payload.body, payload.contentType);
    } catch {
      /* never surface to the host page */
    }
  }
}

/**
 * Wire the hook into a page. Work happens strictly after load complete
 * plus an idle delay, off the rendering critical path; the connection
 * gate is checked at fire time; all failures are swallowed.
 */
export function installHook(
  env: PageEnvironment,
  overrides: Partial<HookConfig> = {},
): HookConfig {
  const config = normalizeConfig(overrides);
  env.onLoadComplete(() => {
    env.schedule(() => {
      if (!gateAllows(env, config)) {
        return;
      }
      void postOnce(env, config);
    }, config.idleDelayMs);
  });
  return config;
}
