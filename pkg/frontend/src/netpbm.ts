/**
 * Binary netpbm (P5 grayscale / P6 color) decoding for uploaded images and
 * the base64 payloads the inference service returns.
 */

export interface PnmImage {
  width: number;
  height: number;
  channels: 1 | 3;
  maxval: number;
  /** Row-major, channel-interleaved samples in [0, maxval]. */
  samples: Uint16Array;
}

export class NetpbmError extends Error {}

function isSpace(byte: number): boolean {
  return byte === 0x20 || byte === 0x09 || byte === 0x0a || byte === 0x0d;
}

/** Read `n` whitespace/comment-separated header tokens; returns raster offset. */
function readTokens(buf: Uint8Array, n: number): { tokens: string[]; offset: number } {
  const tokens: string[] = [];
  let i = 0;
  while (tokens.length < n) {
    if (i >= buf.length) throw new NetpbmError(`truncated header at byte ${i}`);
    const c = buf[i]!;
    if (c === 0x23 /* '#' */) {
      while (i < buf.length && buf[i] !== 0x0a) i++;
    } else if (isSpace(c)) {
      i++;
    } else {
      let j = i;
      while (j < buf.length && !isSpace(buf[j]!)) j++;
      tokens.push(String.fromCharCode(...buf.subarray(i, j)));
      i = j;
    }
  }
  if (i >= buf.length) throw new NetpbmError(`missing whitespace after header at byte ${i}`);
  return { tokens, offset: i + 1 };
}

export function parsePnm(buf: Uint8Array): PnmImage {
  const { tokens, offset } = readTokens(buf, 4);
  const magic = tokens[0]!;
  if (magic !== "P5" && magic !== "P6") {
    throw new NetpbmError(`unsupported magic ${JSON.stringify(magic)} (need P5 or P6)`);
  }
  const width = Number(tokens[1]);
  const height = Number(tokens[2]);
  const maxval = Number(tokens[3]);
  if (!Number.isInteger(width) || !Number.isInteger(height) || !Number.isInteger(maxval)
      || width <= 0 || height <= 0 || maxval <= 0 || maxval > 65535) {
    throw new NetpbmError(`bad dimensions/maxval ${width}x${height}/${maxval}`);
  }
  const channels = magic === "P6" ? 3 : 1;
  const wide = maxval > 255;
  const count = width * height * channels;
  const need = count * (wide ? 2 : 1);
  if (buf.length - offset < need) {
    throw new NetpbmError(`truncated raster: need ${need} bytes, have ${buf.length - offset}`);
  }
  const samples = new Uint16Array(count);
  if (wide) {
    for (let k = 0; k < count; k++) {
      samples[k] = (buf[offset + 2 * k]! << 8) | buf[offset + 2 * k + 1]!; // big-endian
    }
  } else {
    for (let k = 0; k < count; k++) samples[k] = buf[offset + k]!;
  }
  return { width, height, channels: channels as 1 | 3, maxval, samples };
}

export function encodePnm(img: PnmImage): Uint8Array {
  const magic = img.channels === 3 ? "P6" : "P5";
  const header = `${magic}\n${img.width} ${img.height}\n${img.maxval}\n`;
  const wide = img.maxval > 255;
  const count = img.width * img.height * img.channels;
  if (img.samples.length !== count) {
    throw new NetpbmError(`sample count ${img.samples.length} != ${count}`);
  }
  const out = new Uint8Array(header.length + count * (wide ? 2 : 1));
  for (let k = 0; k < header.length; k++) out[k] = header.charCodeAt(k);
  let p = header.length;
  for (let k = 0; k < count; k++) {
    const v = img.samples[k]!;
    if (v > img.maxval) throw new NetpbmError(`sample ${v} exceeds maxval ${img.maxval}`);
    if (wide) {
      out[p++] = v >> 8;
      out[p++] = v & 0xff;
    } else {
      out[p++] = v;
    }
  }
  return out;
}

/** Grayscale view in [0, 1]; color inputs use the mean of the channels. */
export function toUnitGray(img: PnmImage): Float64Array {
  const n = img.width * img.height;
  const out = new Float64Array(n);
  if (img.channels === 1) {
    for (let k = 0; k < n; k++) out[k] = img.samples[k]! / img.maxval;
  } else {
    for (let k = 0; k < n; k++) {
      out[k] = (img.samples[3 * k]! + img.samples[3 * k + 1]! + img.samples[3 * k + 2]!)
        / (3 * img.maxval);
    }
  }
  return out;
}

export function base64ToBytes(b64: string): Uint8Array {
  const bin = atob(b64);
  const out = new Uint8Array(bin.length);
  for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
  return out;
}

export function bytesToBase64(bytes: Uint8Array): string {
  let bin = "";
  for (const b of bytes) bin += String.fromCharCode(b);
  return btoa(bin);
}
