export { captureSnapshot, type Snapshot } from './capture.js';
export { mineLinks } from './links.js';
export { encodeMultipart, type EncodedBody } from './multipart.js';
export { encodePng } from './png.js';
export { buildPayload, installHook } from './hook.js';
export { browserEnvironment } from './browser.js';
export {
  DEFAULT_CONFIG,
  normalizeConfig,
  type ConnectionGate,
  type HookConfig,
  type LinkRect,
  type PageAnchor,
  type PageEnvironment,
} from './types.js';
