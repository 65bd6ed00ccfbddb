/**
 * Double-submit guard for the decision form: while one request is in
 * flight, further submits are ignored and `busy` stays true (the button
 * is disabled off this flag).
 */
export class DecisionSubmitter {
    private inFlight = false;

    get busy(): boolean {
        return this.inFlight;
    }

    async submit<T>(send: () => Promise<T>): Promise<T | undefined> {
        if (this.inFlight) return undefined;
        this.inFlight = true;
        try {
            return await send();
        } finally {
            this.inFlight = false;
        }
    }
}
