import { beforeEach, describe, expect, it, vi } from 'vitest';

import { StudyApi } from '../src/api.js';
import { EvaluationSession } from '../src/session.js';
import { LineupUi } from '../src/ui.js';

function fakeSvg(m = 20): string {
  const groups = Array.from({ length: m }, (_, i) => {
    const x = (i % 5) * 100;
    const y = Math.floor(i / 5) * 100;
    return `<g transform="translate(${x},${y})"><rect x="0" y="0" width="100" height="100" fill="none" stroke="#b8b8b8" stroke-width="1"/><text x="4" y="12">${i + 1}</text></g>`;
  }).join('');
  return `<svg xmlns="http://www.w3.org/2000/svg" width="500" height="400">${groups}</svg>`;
}

interface Call {
  url: string;
  init?: RequestInit;
}

function mockServer(payloads: Record<string, unknown[]>) {
  const calls: Call[] = [];
  const queues = new Map(Object.entries(payloads).map(([k, v]) => [k, [...v]]));
  vi.stubGlobal('fetch', async (url: string, init?: RequestInit) => {
    calls.push({ url, init });
    for (const [pattern, queue] of queues) {
      if (url.includes(pattern)) {
        const next = queue.length > 1 ? queue.shift() : queue[0];
        const body = next as { __status?: number } & Record<string, unknown>;
        const status = body.__status ?? 200;
        const clean = { ...body };
        delete clean.__status;
        return new Response(JSON.stringify(clean), { status });
      }
    }
    return new Response(JSON.stringify({ error: 'not found' }), { status: 404 });
  });
  return calls;
}

async function settle() {
  await new Promise((r) => setTimeout(r, 0));
}

describe('LineupUi', () => {
  let root: HTMLElement;
  let session: EvaluationSession;

  beforeEach(() => {
    vi.unstubAllGlobals();
    document.body.innerHTML = '<main id="app"></main>';
    root = document.getElementById('app') as HTMLElement;
    session = new EvaluationSession('obs-9');
  });

  it('renders the grid and enables submit only after panel + confidence', async () => {
    mockServer({ '/next': [{ lineup_id: 'L1', svg: fakeSvg() }] });
    const ui = new LineupUi(root, new StudyApi('', 's'), session);
    await ui.start();
    await settle();

    const groups = root.querySelectorAll('svg > g');
    expect(groups.length).toBe(20);
    const btn = root.querySelector<HTMLButtonElement>('#submit-pick')!;
    expect(btn.disabled).toBe(true);

    (groups[6] as SVGGElement).dispatchEvent(new Event('click', { bubbles: true }));
    expect(session.selectedPanel).toBe(7);
    expect(btn.disabled).toBe(true); // confidence still missing

    const radio = root.querySelector<HTMLInputElement>('input[name="confidence"][value="4"]')!;
    radio.checked = true;
    radio.dispatchEvent(new Event('change', { bubbles: true }));
    expect(btn.disabled).toBe(false);
  });

  it('clicking a second panel moves the highlight', async () => {
    mockServer({ '/next': [{ lineup_id: 'L1', svg: fakeSvg() }] });
    const ui = new LineupUi(root, new StudyApi('', 's'), session);
    await ui.start();
    await settle();
    const groups = root.querySelectorAll('svg > g');
    (groups[6] as SVGGElement).dispatchEvent(new Event('click'));
    (groups[2] as SVGGElement).dispatchEvent(new Event('click'));
    expect(session.selectedPanel).toBe(3);
    const strokes = Array.from(groups).map((g) =>
      (g.querySelector('rect') as SVGRectElement).getAttribute('stroke'),
    );
    expect(strokes.filter((s) => s === '#e8730c').length).toBe(1);
    expect(strokes[2]).toBe('#e8730c');
  });

  it('no answer metadata is present in the DOM before reveal', async () => {
    mockServer({ '/next': [{ lineup_id: 'L1', svg: fakeSvg() }] });
    const ui = new LineupUi(root, new StudyApi('', 's'), session);
    await ui.start();
    await settle();
    expect(root.innerHTML).not.toMatch(/answer/i);
  });

  it('submits the pick and advances to the done screen', async () => {
    const calls = mockServer({
      '/next': [
        { lineup_id: 'L1', svg: fakeSvg() },
        { done: true },
      ],
      '/pick': [{ ok: true, lineup_id: 'L1', K: 1 }],
    });
    const ui = new LineupUi(root, new StudyApi('', 's'), session);
    await ui.start();
    await settle();
    root.querySelectorAll('svg > g')[4].dispatchEvent(new Event('click'));
    const radio = root.querySelector<HTMLInputElement>('input[name="confidence"][value="2"]')!;
    radio.dispatchEvent(new Event('change'));
    await ui.submit();
    await settle();

    const pickCall = calls.find((c) => c.url.includes('/pick'))!;
    const body = JSON.parse(String(pickCall.init?.body));
    expect(body.panel).toBe(5);
    expect(body.confidence).toBe(2);
    expect(root.textContent).toContain('All done');
    expect(session.completed).toBe(1);
  });

  it('surfaces a server rejection verbatim and keeps the lineup', async () => {
    mockServer({
      '/next': [{ lineup_id: 'L1', svg: fakeSvg() }],
      '/pick': [{ __status: 400, error: 'this observer already answered this lineup' }],
    });
    const ui = new LineupUi(root, new StudyApi('', 's'), session);
    await ui.start();
    await settle();
    root.querySelectorAll('svg > g')[0].dispatchEvent(new Event('click'));
    root
      .querySelector<HTMLInputElement>('input[name="confidence"][value="3"]')!
      .dispatchEvent(new Event('change'));
    await ui.submit();
    expect(root.querySelector('#status')?.textContent).toBe(
      'this observer already answered this lineup',
    );
    expect(session.phase).toBe('viewing');
  });

  it('payload without svg lands in the error state with retry', async () => {
    mockServer({ '/next': [{ lineup_id: 'L1', svg: '' }] });
    const ui = new LineupUi(root, new StudyApi('', 's'), session);
    await ui.start();
    await settle();
    expect(root.textContent).toContain('Could not load');
    expect(root.querySelector('#retry-btn')).not.toBeNull();
  });

  it('modeler flow blocks reveal before a pick and shows the result after', async () => {
    mockServer({
      '/next': [{ lineup_id: 'L1', svg: fakeSvg() }],
      '/pick': [{ ok: true, lineup_id: 'L1', K: 1 }],
      '/reveal': [{ lineup_id: 'L1', answer_index: 5, correct: true, x: 1, K: 1, p: 0.0512 }],
    });
    const ui = new LineupUi(root, new StudyApi('', 's'), session, { modeler: true });
    await ui.start();
    await settle();

    expect(await ui.reveal('L1')).toBeNull(); // nothing committed yet

    root.querySelectorAll('svg > g')[4].dispatchEvent(new Event('click'));
    root
      .querySelector<HTMLInputElement>('input[name="confidence"][value="5"]')!
      .dispatchEvent(new Event('change'));
    await ui.submit();
    await settle();
    expect(root.textContent).toContain('Reveal');

    const first = await ui.reveal('L1');
    expect(first?.answer_index).toBe(5);
    const second = await ui.reveal('L1'); // idempotent from the client's view
    expect(second?.answer_index).toBe(5);
    expect(root.querySelector('#reveal-result')?.textContent).toContain('0.0512');
  });
});
