export type ReviewStatus = 'pending' | 'reviewed';

export type Verdict = 'accept' | 'override_positive' | 'override_negative';

export interface StudySummary {
    study_id: string;
    created_at: number;
    rle: string;
    theta: number;
    min_area: number;
    width: number;
    height: number;
    review_status: ReviewStatus;
}

export interface StudyDetail extends StudySummary {
    /** base64 PNG payloads */
    image: string;
    prob_map: string;
    overlay: string;
    decision?: {
        verdict: Verdict;
        theta_used: number;
        note: string;
        timestamp: number;
    };
}

export interface PredictResponse {
    study_id: string;
    rle: string;
    theta: number;
    min_area: number;
    width: number;
    height: number;
    prob_map: string;
    overlay: string;
}

export interface DecisionResponse {
    study_id: string;
    verdict: Verdict;
    theta_used: number;
    note: string;
    timestamp: number;
}

/**
 * Client-side working state for one opened study. The derived mask is
 * always recomputed from (probMap, currentTheta); it is never edited.
 */
export interface StudyView {
    studyId: string;
    /** grayscale pixels of the preprocessed image, row-major */
    image: Uint8Array;
    /** 8-bit quantized probability map, row-major */
    probMap: Uint8Array;
    width: number;
    height: number;
    currentTheta: number;
    derivedMask: Uint8Array;
    reviewStatus: ReviewStatus;
}
