/** RGBA overlay rendering: mask pixels blend toward pure red. */
export function overlayRgba(
    gray: Uint8Array,
    mask: Uint8Array,
    alpha = 0.4,
): Uint8ClampedArray<ArrayBuffer> {
    if (gray.length !== mask.length) {
        throw new Error(`image ${gray.length} and mask ${mask.length} sizes differ`);
    }
    const out = new Uint8ClampedArray(new ArrayBuffer(gray.length * 4));
    for (let i = 0; i < gray.length; i++) {
        const g = gray[i];
        const o = i * 4;
        if (mask[i]) {
            const dim = (1 - alpha) * g;
            out[o] = Math.round(dim + alpha * 255);
            out[o + 1] = Math.round(dim);
            out[o + 2] = Math.round(dim);
        } else {
            out[o] = g;
            out[o + 1] = g;
            out[o + 2] = g;
        }
        out[o + 3] = 255;
    }
    return out;
}
