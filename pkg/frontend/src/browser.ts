/**
 * Browser adapter: backs PageEnvironment with the real DOM. Rendering
 * serializes the document into an SVG foreignObject and draws it onto a
 * canvas; the browser itself refuses cross-origin subresources, which is
 * exactly the scope we want.
 */

import type { PageAnchor, PageEnvironment } from './types.js';

declare const document: any;
declare const window: any;
declare class XMLSerializer {
  serializeToString(node: unknown): string;
}
declare class Image {
  onload: (() => void) | null;
  onerror: ((err: unknown) => void) | null;
  src: string;
}

function connectionType(): string {
  const connection = (window.navigator as any).connection;
  const type: string | undefined = connection?.type ?? connection?.effectiveType;
  if (!type) {
    return 'unknown';
  }
  return type === 'wifi' ? 'wifi' : 'cellular';
}

async function rasterizeDom(width: number, height: number): Promise<Uint8Array> {
  const serialized = new XMLSerializer().serializeToString(document.documentElement);
  const svg =
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}">` +
    `<foreignObject width="100%" height="100%">${serialized}</foreignObject></svg>`;
  const url = 'data:image/svg+xml;charset=utf-8,' + encodeURIComponent(svg);

  const image = new Image();
  await new Promise<void>((resolve, reject) => {
    image.onload = () => resolve();
    image.onerror = (err: unknown) => reject(err);
    image.src = url;
  });

  const canvas = document.createElement('canvas');
  canvas.width = width;
  canvas.height = height;
  const ctx = canvas.getContext('2d');
  if (!ctx) {
    throw new Error('2d canvas unavailable');
  }
  ctx.drawImage(image, 0, 0);
  return new Uint8Array(ctx.getImageData(0, 0, width, height).data.buffer);
}

export function browserEnvironment(): PageEnvironment {
  return {
    location: { href: String(window.location.href) },
    viewport: { width: window.innerWidth, height: window.innerHeight },
    pageHeight: document.documentElement.scrollHeight,
    connectionType,
    anchors(): PageAnchor[] {
      const out: PageAnchor[] = [];
      for (const a of document.querySelectorAll('a[href]')) {
        const box = a.getBoundingClientRect();
        out.push({
          href: a.getAttribute('href') ?? '',
          rect: {
            left: Math.round(box.left + window.scrollX),
            top: Math.round(box.top + window.scrollY),
            right: Math.round(box.right + window.scrollX),
            bottom: Math.round(box.bottom + window.scrollY),
          },
        });
      }
      return out;
    },
    rasterize: rasterizeDom,
    onLoadComplete(callback: () => void): void {
      if (document.readyState === 'complete') {
        callback();
        return;
      }
      // addEventListener keeps any handlers the page already registered.
      window.addEventListener('load', callback);
    },
    schedule(callback: () => void, delayMs: number): void {
      window.setTimeout(callback, delayMs);
    },
    async post(path: string, body: Uint8Array, contentType: string) {
      const response = await window.fetch(path, {
        method: 'POST',
        headers: { 'Content-Type': contentType },
        body,
      });
      return { status: response.status as number };
    },
  };
}
