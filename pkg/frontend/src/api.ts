import {
    DecisionResponse,
    PredictResponse,
    StudyDetail,
    StudySummary,
    Verdict,
} from './types.js';

export class ApiError extends Error {
    constructor(public status: number, message: string) {
        super(message);
        this.name = 'ApiError';
    }
}

async function parseError(resp: Response): Promise<ApiError> {
    let message = `${resp.status} ${resp.statusText}`;
    try {
        const body = await resp.json();
        if (body && typeof body.error === 'string') message = body.error;
    } catch {
        // non-JSON error body; keep the status line
    }
    return new ApiError(resp.status, message);
}

/** Thin typed client over the service's HTTP API. */
export class Api {
    constructor(private base = '') {}

    private async get<T>(path: string): Promise<T> {
        const resp = await fetch(this.base + path);
        if (!resp.ok) throw await parseError(resp);
        return resp.json() as Promise<T>;
    }

    async health(): Promise<Record<string, unknown>> {
        return this.get('/health');
    }

    async getStudies(): Promise<StudySummary[]> {
        const body = await this.get<{ studies: StudySummary[] }>('/studies');
        return body.studies;
    }

    async getStudy(studyId: string): Promise<StudyDetail> {
        return this.get(`/studies/${studyId}`);
    }

    async predict(image: BodyInit, theta?: number, minArea?: number): Promise<PredictResponse> {
        const params = new URLSearchParams();
        if (theta !== undefined) params.set('theta', String(theta));
        if (minArea !== undefined) params.set('min_area', String(minArea));
        const query = params.toString();
        const resp = await fetch(`${this.base}/predict${query ? '?' + query : ''}`, {
            method: 'POST',
            body: image,
        });
        if (!resp.ok) throw await parseError(resp);
        return resp.json();
    }

    async postDecision(
        studyId: string,
        verdict: Verdict,
        thetaUsed: number,
        note = '',
    ): Promise<DecisionResponse> {
        const resp = await fetch(`${this.base}/studies/${studyId}/decision`, {
            method: 'POST',
            headers: { 'Content-Type': 'application/json' },
            body: JSON.stringify({ verdict, theta_used: thetaUsed, note }),
        });
        if (!resp.ok) throw await parseError(resp);
        return resp.json();
    }
}
