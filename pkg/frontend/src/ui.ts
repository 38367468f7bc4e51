// DOM layer: renders the lineup grid, wires panel selection, the reason
// checkboxes, the confidence scale, and submit/reveal. The SVG arrives
// pre-rendered from the service; panels are the top-level <g> groups in
// document order, so group k is panel k+1.

import { ApiError, isDone, Reason, RevealResult, StudyApi } from './api.js';
import { EvaluationSession } from './session.js';

export const REASONS: Reason[] = ['Outlier', 'Spread', 'Trend', 'Asymmetry', 'Other'];

const SELECT_COLOR = '#e8730c';

export interface UiOptions {
  modeler: boolean;
}

export class LineupUi {
  private panelGroups: SVGGElement[] = [];
  private lastReveal: RevealResult | null = null;

  constructor(
    readonly root: HTMLElement,
    readonly api: StudyApi,
    readonly session: EvaluationSession,
    readonly options: UiOptions = { modeler: false },
  ) {}

  async start(): Promise<void> {
    await this.advance();
  }

  async advance(): Promise<void> {
    let payload;
    try {
      payload = await this.api.next(this.session.observer);
    } catch (err) {
      this.renderError(err, () => this.advance());
      return;
    }
    if (isDone(payload)) {
      this.session.finish();
      this.renderComplete();
      return;
    }
    if (!payload.svg) {
      this.renderError(new Error('payload is missing the lineup image'), () => this.advance());
      return;
    }
    this.session.beginLineup(payload);
    this.renderLineup(payload.svg);
  }

  // -- rendering ------------------------------------------------------------

  private renderLineup(svg: string): void {
    this.root.innerHTML = `
      <div class="prompt">Which plot is the most different? Click it, say why, then submit.</div>
      <div class="grid" id="lineup-grid">${svg}</div>
      <form class="eval-form" id="eval-form">
        <fieldset class="reasons">
          <legend>What feature led to your choice?</legend>
          ${REASONS.map(
            (r) => `<label><input type="checkbox" name="reason" value="${r}"> ${r}</label>`,
          ).join('')}
          <input type="text" name="other-text" placeholder="other reason" maxlength="200">
        </fieldset>
        <fieldset class="confidence">
          <legend>Confidence (1 = weak, 5 = high)</legend>
          ${[1, 2, 3, 4, 5]
            .map((c) => `<label><input type="radio" name="confidence" value="${c}"> ${c}</label>`)
            .join('')}
        </fieldset>
        <button type="submit" id="submit-pick" disabled>Submit</button>
        <span class="status" id="status"></span>
      </form>`;
    this.wireGrid();
    this.wireForm();
  }

  private wireGrid(): void {
    const grid = this.root.querySelector('#lineup-grid') as HTMLElement;
    const svg = grid.querySelector('svg');
    this.panelGroups = svg ? (Array.from(svg.querySelectorAll(':scope > g')) as SVGGElement[]) : [];
    this.panelGroups.forEach((group, i) => {
      group.addEventListener('click', () => this.selectPanel(i + 1));
    });
  }

  private wireForm(): void {
    const form = this.root.querySelector('#eval-form') as HTMLFormElement;
    form.querySelectorAll<HTMLInputElement>('input[name="reason"]').forEach((box) => {
      box.addEventListener('change', () => {
        this.session.toggleReason(box.value as Reason);
      });
    });
    const other = form.querySelector<HTMLInputElement>('input[name="other-text"]');
    other?.addEventListener('input', () => {
      this.session.otherText = other.value;
    });
    form.querySelectorAll<HTMLInputElement>('input[name="confidence"]').forEach((radio) => {
      radio.addEventListener('change', () => {
        this.session.setConfidence(Number(radio.value));
        this.refreshSubmit();
      });
    });
    form.addEventListener('submit', (ev) => {
      ev.preventDefault();
      void this.submit();
    });
  }

  selectPanel(index: number): void {
    this.session.selectPanel(index);
    this.panelGroups.forEach((group, i) => {
      const border = group.querySelector('rect');
      if (!border) return;
      if (i + 1 === index) {
        border.setAttribute('stroke', SELECT_COLOR);
        border.setAttribute('stroke-width', '3');
      } else {
        border.setAttribute('stroke', '#b8b8b8');
        border.setAttribute('stroke-width', '1');
      }
    });
    this.refreshSubmit();
  }

  private refreshSubmit(): void {
    const btn = this.root.querySelector<HTMLButtonElement>('#submit-pick');
    if (btn) btn.disabled = !this.session.canSubmit();
  }

  private setStatus(text: string): void {
    const el = this.root.querySelector('#status');
    if (el) el.textContent = text;
  }

  // -- actions ----------------------------------------------------------------

  async submit(): Promise<void> {
    if (!this.session.canSubmit() || !this.session.current) return;
    const lineupId = this.session.current.lineup_id;
    const body = this.session.buildPick();
    this.session.markSubmitting();
    this.refreshSubmit();
    try {
      await this.api.submitPick(lineupId, body);
    } catch (err) {
      if (err instanceof ApiError) {
        this.setStatus(err.message); // server rejection shown verbatim
      } else {
        this.setStatus('network problem; your answer was not recorded');
      }
      this.session.phase = 'viewing';
      this.refreshSubmit();
      return;
    }
    this.session.markAnswered();
    if (this.options.modeler) {
      await this.renderRevealGate(lineupId);
    } else {
      await this.advance();
    }
  }

  private async renderRevealGate(lineupId: string): Promise<void> {
    this.root.innerHTML = `
      <div class="prompt">Answer recorded. Reveal the data panel?</div>
      <button id="reveal-btn">Reveal</button>
      <button id="next-btn">Next lineup</button>
      <div id="reveal-result"></div>`;
    this.root.querySelector('#reveal-btn')?.addEventListener('click', () => {
      void this.reveal(lineupId);
    });
    this.root.querySelector('#next-btn')?.addEventListener('click', () => {
      void this.advance();
    });
  }

  async reveal(lineupId: string): Promise<RevealResult | null> {
    if (!this.session.hasAnswered(lineupId)) {
      this.setStatus('reveal is only available after your pick is committed');
      return null;
    }
    try {
      this.lastReveal = await this.api.reveal(lineupId, this.session.observer);
    } catch (err) {
      this.setStatus(err instanceof ApiError ? err.message : 'reveal failed');
      return null;
    }
    const r = this.lastReveal;
    const el = this.root.querySelector('#reveal-result');
    if (el) {
      el.textContent =
        `Data panel: #${r.answer_index}. You were ${r.correct ? 'right' : 'wrong'}. ` +
        `Running visual p-value: ${r.p.toFixed(4)} (${r.x}/${r.K} picks).`;
    }
    return r;
  }

  // -- terminal states -----------------------------------------------------------

  private renderComplete(): void {
    this.root.innerHTML = `
      <div class="prompt">All done. Thank you!</div>
      <div class="summary">You evaluated ${this.session.completed} lineup${
        this.session.completed === 1 ? '' : 's'
      }.</div>`;
  }

  private renderError(err: unknown, retry: () => void): void {
    const msg = err instanceof Error ? err.message : String(err);
    this.root.innerHTML = `
      <div class="error">Could not load the next lineup: ${msg}</div>
      <button id="retry-btn">Retry</button>`;
    this.root.querySelector('#retry-btn')?.addEventListener('click', retry);
  }
}
