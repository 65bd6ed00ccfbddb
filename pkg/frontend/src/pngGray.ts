/**
 * Minimal decoder for the PNGs the service ships: 8-bit grayscale,
 * color type 0, non-interlaced. The zlib inflate step is injected so the
 * same code runs under node (node:zlib) and in tests; the browser app
 * normally decodes PNGs through the canvas instead.
 */

export interface GrayPng {
    width: number;
    height: number;
    pixels: Uint8Array; // row-major
}

const SIGNATURE = [0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a];

function u32(data: Uint8Array, at: number): number {
    return ((data[at] << 24) | (data[at + 1] << 16) | (data[at + 2] << 8) | data[at + 3]) >>> 0;
}

function paeth(a: number, b: number, c: number): number {
    const p = a + b - c;
    const pa = Math.abs(p - a);
    const pb = Math.abs(p - b);
    const pc = Math.abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

export function decodeGrayPng(
    data: Uint8Array,
    inflate: (compressed: Uint8Array) => Uint8Array,
): GrayPng {
    for (let i = 0; i < SIGNATURE.length; i++) {
        if (data[i] !== SIGNATURE[i]) throw new Error('not a PNG');
    }

    let width = 0;
    let height = 0;
    const idat: Uint8Array[] = [];
    let at = 8;
    while (at + 8 <= data.length) {
        const length = u32(data, at);
        const kind = String.fromCharCode(data[at + 4], data[at + 5], data[at + 6], data[at + 7]);
        const body = data.subarray(at + 8, at + 8 + length);
        if (kind === 'IHDR') {
            width = u32(body, 0);
            height = u32(body, 4);
            const bitDepth = body[8];
            const colorType = body[9];
            const interlace = body[12];
            if (bitDepth !== 8 || colorType !== 0 || interlace !== 0) {
                throw new Error(
                    `unsupported PNG: bitDepth=${bitDepth} colorType=${colorType} interlace=${interlace}`);
            }
        } else if (kind === 'IDAT') {
            idat.push(body);
        } else if (kind === 'IEND') {
            break;
        }
        at += 12 + length; // length + type + payload + crc
    }
    if (!width || !height) throw new Error('PNG missing IHDR dimensions');

    let compressedSize = 0;
    for (const part of idat) compressedSize += part.length;
    const compressed = new Uint8Array(compressedSize);
    let offset = 0;
    for (const part of idat) {
        compressed.set(part, offset);
        offset += part.length;
    }
    const raw = inflate(compressed);
    const stride = width + 1; // filter byte per scanline, 1 byte per pixel
    if (raw.length < stride * height) {
        throw new Error(`PNG payload too short: ${raw.length} < ${stride * height}`);
    }

    const pixels = new Uint8Array(width * height);
    for (let y = 0; y < height; y++) {
        const filter = raw[y * stride];
        const line = raw.subarray(y * stride + 1, (y + 1) * stride);
        const row = y * width;
        const prev = row - width;
        for (let x = 0; x < width; x++) {
            const left = x > 0 ? pixels[row + x - 1] : 0;
            const up = y > 0 ? pixels[prev + x] : 0;
            const upLeft = x > 0 && y > 0 ? pixels[prev + x - 1] : 0;
            let value: number;
            switch (filter) {
                case 0: value = line[x]; break;
                case 1: value = line[x] + left; break;
                case 2: value = line[x] + up; break;
                case 3: value = line[x] + Math.floor((left + up) / 2); break;
                case 4: value = line[x] + paeth(left, up, upLeft); break;
                default: throw new Error(`unknown PNG filter ${filter} on row ${y}`);
            }
            pixels[row + x] = value & 0xff;
        }
    }
    return { width, height, pixels };
}

export function base64ToBytes(b64: string): Uint8Array {
    if (typeof atob === 'function') {
        const bin = atob(b64);
        const out = new Uint8Array(bin.length);
        for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
        return out;
    }
    const nodeBuffer = (globalThis as { Buffer?: { from(s: string, e: string): Uint8Array } }).Buffer;
    if (nodeBuffer) return new Uint8Array(nodeBuffer.from(b64, 'base64'));
    throw new Error('no base64 decoder available');
}
