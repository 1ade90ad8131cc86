/** Hand-rolled multipart/form-data encoding for the snapshot upload. */

const encoder = new TextEncoder();

export interface EncodedBody {
  body: Uint8Array;
  contentType: string;
}

function randomBoundary(): string {
  let suffix = '';
  for (let i = 0; i < 24; i++) {
    suffix += Math.floor(Math.random() * 16).toString(16);
  }
  return 'dshook-' + suffix;
}

/**
 * Encode named parts in insertion order. The image part carries a
 * filename and an image/png content type; everything else is plain text.
 */
export function encodeMultipart(
  parts: Map<string, Uint8Array>,
  boundary?: string,
): EncodedBody {
  const b = boundary ?? randomBoundary();
  const pieces: Uint8Array[] = [];
  for (const [name, payload] of parts) {
    let head = `--${b}\r\nContent-Disposition: form-data; name="${name}"`;
    if (name === 'image') {
      head += '; filename="snapshot.png"\r\nContent-Type: image/png';
    }
    head += '\r\n\r\n';
    pieces.push(encoder.encode(head), payload, encoder.encode('\r\n'));
  }
  pieces.push(encoder.encode(`--${b}--\r\n`));
  const total = pieces.reduce((n, p) => n + p.length, 0);
  const body = new Uint8Array(total);
  let offset = 0;
  for (const piece of pieces) {
    body.set(piece, offset);
    offset += piece.length;
  }
  return { body, contentType: `multipart/form-data; boundary=${b}` };
}
