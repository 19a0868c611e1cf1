import { describe, expect, it } from "vitest";

import { decodeTvid, decodeTvidBase64, frameToRgba, pixelToGray, TvidError } from "../src/tvid.js";

/** Independent encoder used only by the tests. */
export function encodeTvid(t: number, h: number, w: number, values: number[]): Uint8Array {
  const header = 6 + 2 + 12;
  const buffer = new ArrayBuffer(header + t * h * w * 4);
  const view = new DataView(buffer);
  const bytes = new Uint8Array(buffer);
  bytes.set([0x54, 0x56, 0x49, 0x44, 0x31, 0x00], 0);
  view.setUint16(6, 1, true);
  view.setUint32(8, t, true);
  view.setUint32(12, h, true);
  view.setUint32(16, w, true);
  values.forEach((value, index) => view.setFloat32(header + index * 4, value, true));
  return bytes;
}

describe("decodeTvid", () => {
  it("round-trips a synthetic video", () => {
    const values = Array.from({ length: 2 * 8 * 8 }, (_, i) => ((i % 32) - 16) / 16);
    const decoded = decodeTvid(encodeTvid(2, 8, 8, values));
    expect(decoded.t).toBe(2);
    expect(decoded.h).toBe(8);
    expect(decoded.w).toBe(8);
    const flat = [...decoded.frames[0], ...decoded.frames[1]];
    flat.forEach((value, index) => expect(value).toBeCloseTo(values[index], 6));
  });

  it("frame count matches the header", () => {
    const decoded = decodeTvid(encodeTvid(5, 8, 8, new Array(5 * 64).fill(0)));
    expect(decoded.frames).toHaveLength(5);
  });

  it("rejects a bad magic", () => {
    const bytes = encodeTvid(1, 8, 8, new Array(64).fill(0));
    bytes[0] = 0x58;
    expect(() => decodeTvid(bytes)).toThrowError(TvidError);
    try {
      decodeTvid(bytes);
    } catch (error) {
      expect((error as TvidError).code).toBe("bad_magic");
    }
  });

  it("rejects a bad version", () => {
    const bytes = encodeTvid(1, 8, 8, new Array(64).fill(0));
    bytes[6] = 9;
    expect(() => decodeTvid(bytes)).toThrowError(TvidError);
  });

  it("rejects a truncated payload without crashing", () => {
    const bytes = encodeTvid(1, 8, 8, new Array(64).fill(0));
    try {
      decodeTvid(bytes.subarray(0, bytes.length - 1));
      expect.unreachable("should have thrown");
    } catch (error) {
      expect((error as TvidError).code).toBe("truncated");
    }
  });

  it("decodes base64 transport", () => {
    const bytes = encodeTvid(1, 8, 8, new Array(64).fill(0.5));
    const decoded = decodeTvidBase64(Buffer.from(bytes).toString("base64"));
    expect(decoded.frames[0][0]).toBeCloseTo(0.5, 6);
  });
});

describe("pixel mapping", () => {
  it("maps the extremes: -1 is black, +1 is white", () => {
    expect(pixelToGray(-1)).toBe(0);
    expect(pixelToGray(1)).toBe(255);
    expect(pixelToGray(0)).toBe(128);
  });

  it("expands frames to opaque gray RGBA", () => {
    const rgba = frameToRgba(new Float32Array([-1, 1, 0]));
    expect([...rgba.slice(0, 4)]).toEqual([0, 0, 0, 255]);
    expect([...rgba.slice(4, 8)]).toEqual([255, 255, 255, 255]);
    expect(rgba[8]).toBe(128);
    expect(rgba[11]).toBe(255);
  });
});
