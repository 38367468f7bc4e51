// Evaluation session state, kept free of DOM concerns so the submit rules
// and timing are directly testable. One session = one observer working
// through lineups until the service says done.

import { LineupPayload, PickBody, Reason } from './api.js';

export type Phase = 'idle' | 'viewing' | 'submitting' | 'done';

export class EvaluationSession {
  phase: Phase = 'idle';
  current: LineupPayload | null = null;
  selectedPanel: number | null = null;
  reasons = new Set<Reason>();
  otherText = '';
  confidence: number | null = null;
  completed = 0;

  private renderedAt: number | null = null;
  private answered = new Set<string>();

  constructor(readonly observer: string, private clock: () => number = () => performance.now()) {}

  beginLineup(payload: LineupPayload): void {
    this.current = payload;
    this.phase = 'viewing';
    this.selectedPanel = null;
    this.reasons.clear();
    this.otherText = '';
    this.confidence = null;
    this.renderedAt = this.clock(); // the timer starts when the grid renders
  }

  selectPanel(index: number): void {
    if (this.phase !== 'viewing') return;
    this.selectedPanel = index; // selecting another panel replaces the first
  }

  toggleReason(reason: Reason): void {
    if (this.reasons.has(reason)) {
      this.reasons.delete(reason);
    } else {
      this.reasons.add(reason);
    }
  }

  setConfidence(level: number): void {
    if (level >= 1 && level <= 5) this.confidence = level;
  }

  canSubmit(): boolean {
    return (
      this.phase === 'viewing' &&
      this.current !== null &&
      this.selectedPanel !== null &&
      this.confidence !== null &&
      !this.answered.has(this.current.lineup_id)
    );
  }

  elapsedSeconds(): number {
    if (this.renderedAt === null) return 0;
    return (this.clock() - this.renderedAt) / 1000;
  }

  buildPick(): PickBody {
    if (!this.canSubmit() || this.current === null || this.selectedPanel === null) {
      throw new Error('pick is not ready to submit');
    }
    return {
      observer: this.observer,
      panel: this.selectedPanel,
      reasons: [...this.reasons],
      other_text: this.reasons.has('Other') ? this.otherText : '',
      confidence: this.confidence as number,
      duration_s: this.elapsedSeconds(),
    };
  }

  markSubmitting(): void {
    this.phase = 'submitting'; // suppresses double-clicks client-side
  }

  markAnswered(): void {
    if (this.current) this.answered.add(this.current.lineup_id);
    this.completed += 1;
  }

  hasAnswered(lineupId: string): boolean {
    return this.answered.has(lineupId);
  }

  finish(): void {
    this.phase = 'done';
    this.current = null;
  }
}
