/**
 * Client-side decoder for the TVID v1 container.
 *
 * Layout (little-endian): 6-byte magic "TVID1\0", u16 version (= 1),
 * u32 t/h/w, then t*h*w float32 pixel values in [-1, 1], frame-major
 * then row-major.
 */

export class TvidError extends Error {
  constructor(public code: "bad_magic" | "bad_version" | "truncated", message: string) {
    super(message);
    this.name = "TvidError";
  }
}

export interface DecodedVideo {
  t: number;
  h: number;
  w: number;
  frames: Float32Array[];
}

const MAGIC = [0x54, 0x56, 0x49, 0x44, 0x31, 0x00]; // "TVID1\0"
const HEADER_BYTES = 6 + 2 + 4 * 3;

export function decodeTvid(data: ArrayBuffer | Uint8Array): DecodedVideo {
  const bytes = data instanceof Uint8Array ? data : new Uint8Array(data);
  if (bytes.length < HEADER_BYTES) {
    throw new TvidError("truncated", `only ${bytes.length} bytes, header needs ${HEADER_BYTES}`);
  }
  for (let i = 0; i < MAGIC.length; i++) {
    if (bytes[i] !== MAGIC[i]) {
      throw new TvidError("bad_magic", "not a TVID stream");
    }
  }
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const version = view.getUint16(6, true);
  if (version !== 1) {
    throw new TvidError("bad_version", `unsupported version ${version}`);
  }
  const t = view.getUint32(8, true);
  const h = view.getUint32(12, true);
  const w = view.getUint32(16, true);
  const expected = t * h * w * 4;
  if (bytes.length - HEADER_BYTES !== expected) {
    throw new TvidError(
      "truncated",
      `payload is ${bytes.length - HEADER_BYTES} bytes, header implies ${expected}`,
    );
  }
  const frames: Float32Array[] = [];
  for (let f = 0; f < t; f++) {
    const frame = new Float32Array(h * w);
    const base = HEADER_BYTES + f * h * w * 4;
    for (let i = 0; i < h * w; i++) {
      frame[i] = view.getFloat32(base + i * 4, true);
    }
    frames.push(frame);
  }
  return { t, h, w, frames };
}

/** Map one pixel value in [-1, 1] to an 8-bit gray level: -1 -> 0, +1 -> 255. */
export function pixelToGray(value: number): number {
  const gray = Math.round(((value + 1) / 2) * 255);
  return Math.min(255, Math.max(0, gray));
}

/** Expand one frame to RGBA bytes for a canvas ImageData buffer. */
export function frameToRgba(frame: Float32Array) {
  const rgba = new Uint8ClampedArray(frame.length * 4);
  for (let i = 0; i < frame.length; i++) {
    const gray = pixelToGray(frame[i]);
    rgba[4 * i] = gray;
    rgba[4 * i + 1] = gray;
    rgba[4 * i + 2] = gray;
    rgba[4 * i + 3] = 255;
  }
  return rgba;
}

export function decodeTvidBase64(b64: string): DecodedVideo {
  const binary = atob(b64);
  const bytes = new Uint8Array(binary.length);
  for (let i = 0; i < binary.length; i++) {
    bytes[i] = binary.charCodeAt(i);
  }
  return decodeTvid(bytes);
}
