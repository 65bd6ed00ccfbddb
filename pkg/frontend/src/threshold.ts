/**
 * Pure client-side re-thresholding of the quantized probability map.
 *
 * A pixel with quantized value q (0..255) is positive iff q >= theta*255.
 * This matches the server's float threshold (p >= theta) exactly whenever
 * 255*theta is not adjacent to an integer; the shipped defaults (0.3, 0.5,
 * 0.7) sit exactly halfway between quantization levels.
 */
export function thresholdMask(probMap: Uint8Array, theta: number): Uint8Array {
    if (!(theta > 0 && theta < 1)) {
        throw new RangeError(`theta must be in (0, 1), got ${theta}`);
    }
    const cut = theta * 255;
    const out = new Uint8Array(probMap.length);
    for (let i = 0; i < probMap.length; i++) {
        out[i] = probMap[i] >= cut ? 1 : 0;
    }
    return out;
}

export function countPositive(mask: Uint8Array): number {
    let n = 0;
    for (let i = 0; i < mask.length; i++) {
        if (mask[i]) n++;
    }
    return n;
}
