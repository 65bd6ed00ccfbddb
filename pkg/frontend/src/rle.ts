/**
 * Run-length codec matching the server's mask format: 1-based "start
 * length" pairs over column-major pixel order (top to bottom, then left
 * to right); "-1" is the empty mask. Masks here are row-major Uint8Arrays
 * of length width*height, as used by the canvas pipeline.
 */

export function decodeRle(text: string, width: number, height: number): Uint8Array {
    const out = new Uint8Array(width * height);
    const trimmed = text.trim();
    if (trimmed === '-1') return out;

    const tokens = trimmed.split(/\s+/);
    if (tokens.length % 2 !== 0) {
        throw new Error(`odd RLE token count ${tokens.length}`);
    }
    const total = width * height;
    let prevEnd = 0;
    for (let i = 0; i < tokens.length; i += 2) {
        const start = Number(tokens[i]);
        const length = Number(tokens[i + 1]);
        if (!Number.isInteger(start) || !Number.isInteger(length)) {
            throw new Error(`non-integer RLE token at ${i + 1}`);
        }
        if (start < 1 || length < 1 || start + length - 1 > total) {
            throw new Error(`RLE run (${start}, ${length}) out of bounds`);
        }
        if (start <= prevEnd) {
            throw new Error(`RLE run at ${start} overlaps previous end ${prevEnd}`);
        }
        for (let p = start; p < start + length; p++) {
            const q = p - 1;
            const col = Math.floor(q / height);
            const row = q % height;
            out[row * width + col] = 1;
        }
        prevEnd = start + length - 1;
    }
    return out;
}

export function encodeRle(mask: Uint8Array, width: number, height: number): string {
    if (mask.length !== width * height) {
        throw new Error(`mask length ${mask.length} != ${width}x${height}`);
    }
    const parts: string[] = [];
    let runStart = 0;
    let runLength = 0;
    for (let q = 0; q < width * height; q++) {
        const col = Math.floor(q / height);
        const row = q % height;
        if (mask[row * width + col]) {
            if (runLength === 0) runStart = q + 1;
            runLength++;
        } else if (runLength > 0) {
            parts.push(`${runStart} ${runLength}`);
            runLength = 0;
        }
    }
    if (runLength > 0) parts.push(`${runStart} ${runLength}`);
    return parts.length ? parts.join(' ') : '-1';
}
