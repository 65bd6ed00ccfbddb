import { StudySummary } from './types.js';

/** Review-queue ordering: pending before reviewed, oldest first within each. */
export function sortStudies(studies: StudySummary[]): StudySummary[] {
    const rank = (s: StudySummary) => (s.review_status === 'pending' ? 0 : 1);
    return [...studies].sort((a, b) => {
        if (rank(a) !== rank(b)) return rank(a) - rank(b);
        if (a.created_at !== b.created_at) return a.created_at - b.created_at;
        return a.study_id < b.study_id ? -1 : a.study_id > b.study_id ? 1 : 0;
    });
}

export function nextPending(studies: StudySummary[], afterId?: string): StudySummary | undefined {
    const pending = sortStudies(studies).filter(s => s.review_status === 'pending');
    if (afterId === undefined) return pending[0];
    return pending.find(s => s.study_id !== afterId);
}
