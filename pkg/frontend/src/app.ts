import { Api, ApiError } from './api.js';
import { overlayRgba } from './overlay.js';
import { nextPending, sortStudies } from './queue.js';
import { DecisionSubmitter } from './submit.js';
import { countPositive, thresholdMask } from './threshold.js';
import { StudySummary, StudyView, Verdict } from './types.js';

const api = new Api('');
const submitter = new DecisionSubmitter();

let studies: StudySummary[] = [];
let current: StudyView | null = null;
const thumbnails = new Map<string, string>(); // study_id -> overlay data URL

function el<T extends HTMLElement>(id: string): T {
    const node = document.getElementById(id);
    if (!node) throw new Error(`missing element #${id}`);
    return node as T;
}

async function pngToGray(b64: string): Promise<{ width: number; height: number; pixels: Uint8Array }> {
    const img = new Image();
    img.src = 'data:image/png;base64,' + b64;
    await img.decode();
    const canvas = document.createElement('canvas');
    canvas.width = img.naturalWidth;
    canvas.height = img.naturalHeight;
    const ctx = canvas.getContext('2d')!;
    ctx.drawImage(img, 0, 0);
    const rgba = ctx.getImageData(0, 0, canvas.width, canvas.height).data;
    const pixels = new Uint8Array(canvas.width * canvas.height);
    for (let i = 0; i < pixels.length; i++) pixels[i] = rgba[i * 4]; // gray: R==G==B
    return { width: canvas.width, height: canvas.height, pixels };
}

function setBanner(message: string | null) {
    const banner = el<HTMLDivElement>('banner');
    banner.textContent = message ?? '';
    banner.style.display = message ? 'block' : 'none';
}

async function refreshQueue() {
    try {
        studies = await api.getStudies();
        setBanner(null);
    } catch (err) {
        setBanner(`service unreachable: ${err instanceof Error ? err.message : err}`);
        return;
    }
    const list = el<HTMLUListElement>('queue');
    list.textContent = '';
    const ordered = sortStudies(studies);
    if (ordered.length === 0) {
        const empty = document.createElement('li');
        empty.className = 'empty';
        empty.textContent = 'No studies yet. POST an image to /predict to add one.';
        list.appendChild(empty);
        return;
    }
    for (const study of ordered) {
        const item = document.createElement('li');
        item.className = study.review_status;
        if (current && study.study_id === current.studyId) item.classList.add('active');
        const thumb = document.createElement('img');
        thumb.className = 'thumb';
        thumb.alt = '';
        void thumbnailUrl(study.study_id)
            .then(url => { thumb.src = url; })
            .catch(() => { /* keep the placeholder on fetch failure */ });
        item.appendChild(thumb);
        const label = document.createElement('span');
        label.textContent = `${study.study_id} · ${study.review_status}`;
        item.appendChild(label);
        item.addEventListener('click', () => void openStudy(study.study_id));
        list.appendChild(item);
    }
}

async function thumbnailUrl(studyId: string): Promise<string> {
    const cached = thumbnails.get(studyId);
    if (cached) return cached;
    const detail = await api.getStudy(studyId);
    const url = 'data:image/png;base64,' + detail.overlay;
    thumbnails.set(studyId, url);
    return url;
}

function renderStudy() {
    if (!current) return;
    const canvas = el<HTMLCanvasElement>('viewer');
    canvas.width = current.width;
    canvas.height = current.height;
    const ctx = canvas.getContext('2d')!;
    const rgba = overlayRgba(current.image, current.derivedMask);
    ctx.putImageData(new ImageData(rgba, current.width, current.height), 0, 0);
    el('theta-value').textContent = current.currentTheta.toFixed(3);
    el('pixel-count').textContent = String(countPositive(current.derivedMask));
    el('study-title').textContent = `${current.studyId} (${current.reviewStatus})`;
    const reviewed = current.reviewStatus !== 'pending';
    for (const id of ['btn-accept', 'btn-override-pos', 'btn-override-neg']) {
        el<HTMLButtonElement>(id).disabled = reviewed || submitter.busy;
    }
}

async function openStudy(studyId: string) {
    const detail = await api.getStudy(studyId);
    const [image, prob] = await Promise.all([pngToGray(detail.image), pngToGray(detail.prob_map)]);
    const slider = el<HTMLInputElement>('theta');
    slider.value = String(detail.theta);
    current = {
        studyId,
        image: image.pixels,
        probMap: prob.pixels,
        width: prob.width,
        height: prob.height,
        currentTheta: detail.theta,
        derivedMask: thresholdMask(prob.pixels, detail.theta),
        reviewStatus: detail.review_status,
    };
    renderStudy();
    void refreshQueue();
}

function onSlider() {
    if (!current) return;
    const theta = Number(el<HTMLInputElement>('theta').value);
    current.currentTheta = theta;
    current.derivedMask = thresholdMask(current.probMap, theta);
    renderStudy();
}

async function decide(verdict: Verdict) {
    if (!current || current.reviewStatus !== 'pending') return;
    const study = current;
    const note = el<HTMLTextAreaElement>('note').value;
    renderStudy(); // disable buttons while in flight
    const outcome = await submitter.submit(async () => {
        try {
            await api.postDecision(study.studyId, verdict, study.currentTheta, note);
            return 'ok' as const;
        } catch (err) {
            if (err instanceof ApiError && err.status === 409) return 'reviewed' as const;
            throw err;
        }
    }).catch(err => {
        setBanner(`decision not saved: ${err instanceof Error ? err.message : err}`);
        return undefined; // network failure: keep the form state
    });
    if (outcome === undefined) {
        renderStudy();
        return;
    }
    if (outcome === 'reviewed') setBanner('study was already reviewed; refreshing');
    else setBanner(null);
    el<HTMLTextAreaElement>('note').value = '';
    study.reviewStatus = 'reviewed';
    await refreshQueue();
    const next = nextPending(studies, study.studyId);
    if (next) await openStudy(next.study_id);
    else renderStudy();
}

function wire() {
    el<HTMLInputElement>('theta').addEventListener('input', onSlider);
    el<HTMLButtonElement>('btn-accept').addEventListener('click', () => void decide('accept'));
    el<HTMLButtonElement>('btn-override-pos')
        .addEventListener('click', () => void decide('override_positive'));
    el<HTMLButtonElement>('btn-override-neg')
        .addEventListener('click', () => void decide('override_negative'));
    el<HTMLButtonElement>('btn-refresh').addEventListener('click', () => void refreshQueue());
    void refreshQueue();
}

wire();
