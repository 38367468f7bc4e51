import { describe, expect, it } from 'vitest';

import { EvaluationSession } from '../src/session.js';

function sessionWithClock(times: number[]) {
  const queue = [...times];
  return new EvaluationSession('obs-1', () => queue.shift() ?? times[times.length - 1]);
}

describe('EvaluationSession', () => {
  it('blocks submit until a panel is selected and confidence is set', () => {
    const s = sessionWithClock([0, 1000]);
    s.beginLineup({ lineup_id: 'L1', svg: '<svg></svg>' });
    expect(s.canSubmit()).toBe(false);
    s.selectPanel(7);
    expect(s.canSubmit()).toBe(false);
    s.setConfidence(4);
    expect(s.canSubmit()).toBe(true);
  });

  it('selecting a second panel replaces the first', () => {
    const s = sessionWithClock([0]);
    s.beginLineup({ lineup_id: 'L1', svg: '<svg></svg>' });
    s.selectPanel(7);
    s.selectPanel(3);
    expect(s.selectedPanel).toBe(3);
  });

  it('starts the timer at render and reports duration in seconds', () => {
    const s = sessionWithClock([1000, 13500]);
    s.beginLineup({ lineup_id: 'L1', svg: '<svg></svg>' });
    s.selectPanel(2);
    s.setConfidence(5);
    expect(s.buildPick().duration_s).toBeCloseTo(12.5, 6);
  });

  it('reason toggling is a multi-select', () => {
    const s = sessionWithClock([0]);
    s.beginLineup({ lineup_id: 'L1', svg: '<svg></svg>' });
    s.toggleReason('Spread');
    s.toggleReason('Trend');
    s.toggleReason('Spread');
    expect([...s.reasons]).toEqual(['Trend']);
  });

  it('other text only ships when Other is ticked', () => {
    const s = sessionWithClock([0, 10]);
    s.beginLineup({ lineup_id: 'L1', svg: '<svg></svg>' });
    s.selectPanel(1);
    s.setConfidence(3);
    s.otherText = 'strange banding';
    expect(s.buildPick().other_text).toBe('');
    s.toggleReason('Other');
    expect(s.buildPick().other_text).toBe('strange banding');
  });

  it('suppresses duplicate submission of the same lineup', () => {
    const s = sessionWithClock([0, 10, 20]);
    s.beginLineup({ lineup_id: 'L1', svg: '<svg></svg>' });
    s.selectPanel(4);
    s.setConfidence(2);
    expect(s.canSubmit()).toBe(true);
    s.markAnswered();
    expect(s.canSubmit()).toBe(false);
    expect(s.hasAnswered('L1')).toBe(true);
  });

  it('rejects out-of-range confidence', () => {
    const s = sessionWithClock([0]);
    s.setConfidence(9);
    expect(s.confidence).toBeNull();
  });

  it('counts completed lineups', () => {
    const s = sessionWithClock([0, 5, 10, 15]);
    s.beginLineup({ lineup_id: 'L1', svg: '<svg></svg>' });
    s.markAnswered();
    s.beginLineup({ lineup_id: 'L2', svg: '<svg></svg>' });
    s.markAnswered();
    expect(s.completed).toBe(2);
  });
});
