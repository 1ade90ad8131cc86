import type { LinkRect, PageEnvironment } from './types.js';

/**
 * Walk the page's anchors and return one rect per usable link: absolute
 * URL, nonzero area. Malformed hrefs are skipped, never thrown on.
 */
export function mineLinks(env: PageEnvironment): LinkRect[] {
  const links: LinkRect[] = [];
  for (const anchor of env.anchors()) {
    const { left, top, right, bottom } = anchor.rect;
    if (right <= left || bottom <= top || left < 0 || top < 0) {
      continue;
    }
    let absolute: string;
    try {
      // Absolute hrefs stand alone; relative ones need the page URL.
      absolute = new URL(anchor.href).toString();
    } catch {
      try {
        absolute = new URL(anchor.href, env.location.href).toString();
      } catch {
        continue;
      }
    }
    links.push({ url: absolute, left, top, right, bottom });
  }
  return links;
}
