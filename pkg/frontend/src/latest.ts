/**
 * Last-writer-wins gate for in-flight requests: each request takes a ticket,
 * and only the response holding the newest ticket may be applied. Responses
 * that arrive out of order are simply dropped, so the displayed image always
 * matches the final control state once input settles.
 */
export class LatestGate {
  private seq = 0;

  take(): number {
    return ++this.seq;
  }

  isCurrent(ticket: number): boolean {
    return ticket === this.seq;
  }
}
