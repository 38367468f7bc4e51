// Thin typed client for the study service JSON API. The only endpoints the
// observer flow ever touches are next/pick; reveal exists for modeler mode
// and is the sole call that can carry answer information back.

export type Reason = 'Outlier' | 'Spread' | 'Trend' | 'Asymmetry' | 'Other';

export interface LineupPayload {
  lineup_id: string;
  svg: string;
}

export interface DonePayload {
  done: true;
}

export interface PickBody {
  observer: string;
  panel: number;
  reasons: Reason[];
  other_text: string;
  confidence: number;
  duration_s: number;
}

export interface PickAck {
  ok: boolean;
  lineup_id: string;
  K: number;
}

export interface RevealResult {
  lineup_id: string;
  answer_index: number;
  correct: boolean;
  x: number;
  K: number;
  p: number;
}

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

async function parseOrThrow<T>(res: Response): Promise<T> {
  const body = await res.json().catch(() => ({}));
  if (!res.ok) {
    // surface the server's own message verbatim
    const msg = typeof body?.error === 'string' ? body.error : `HTTP ${res.status}`;
    throw new ApiError(res.status, msg);
  }
  return body as T;
}

export class StudyApi {
  constructor(readonly baseUrl: string, readonly studyId: string) {}

  private url(path: string): string {
    return `${this.baseUrl}/studies/${encodeURIComponent(this.studyId)}${path}`;
  }

  async next(observer: string): Promise<LineupPayload | DonePayload> {
    const target = this.url(`/next?observer=${encodeURIComponent(observer)}`);
    try {
      return await parseOrThrow(await fetch(target));
    } catch (err) {
      if (err instanceof ApiError) throw err;
      // transport-level failure (e.g. a stale keep-alive socket): one retry
      await new Promise((r) => setTimeout(r, 150));
      return parseOrThrow(await fetch(target));
    }
  }

  async submitPick(lineupId: string, body: PickBody): Promise<PickAck> {
    const res = await fetch(this.url(`/lineups/${encodeURIComponent(lineupId)}/pick`), {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(body),
    });
    return parseOrThrow(res);
  }

  async reveal(lineupId: string, observer: string): Promise<RevealResult> {
    const res = await fetch(this.url(`/lineups/${encodeURIComponent(lineupId)}/reveal`), {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ observer, confirm: true }),
    });
    return parseOrThrow(res);
  }
}

export function isDone(p: LineupPayload | DonePayload): p is DonePayload {
  return (p as DonePayload).done === true;
}
