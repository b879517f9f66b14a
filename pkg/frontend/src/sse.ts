// Incremental parser for text/event-stream bodies read off a fetch stream.

export class SseParser {
  private buffer = "";

  /** Feed a chunk; returns the data payloads of any completed events. */
  push(chunk: string): string[] {
    this.buffer += chunk;
    const events: string[] = [];
    let idx: number;
    while ((idx = this.buffer.indexOf("\n\n")) >= 0) {
      const block = this.buffer.slice(0, idx);
      this.buffer = this.buffer.slice(idx + 2);
      const data = block
        .split("\n")
        .filter((line) => line.startsWith("data:"))
        .map((line) => line.slice(5).trimStart())
        .join("\n");
      if (data) events.push(data);
    }
    return events;
  }

  /** Any trailing partial event left in the buffer (normally empty at EOF). */
  residue(): string {
    return this.buffer;
  }
}
