// Entry point: observer tokens are opaque and minted client-side; modeler
// mode (self-blinded workflow with post-pick reveal) is opt-in via query
// parameter.

import { StudyApi } from './api.js';
import { EvaluationSession } from './session.js';
import { LineupUi } from './ui.js';

function observerToken(): string {
  const stored = window.localStorage.getItem('lineup-observer');
  if (stored) return stored;
  const minted = crypto.randomUUID();
  window.localStorage.setItem('lineup-observer', minted);
  return minted;
}

export function boot(root: HTMLElement, location: Location = window.location): LineupUi {
  const params = new URLSearchParams(location.search);
  const studyId = params.get('study') ?? 'default';
  const observer = params.get('observer') ?? observerToken();
  const modeler = params.get('mode') === 'modeler';
  const api = new StudyApi('', studyId);
  const session = new EvaluationSession(observer);
  const ui = new LineupUi(root, api, session, { modeler });
  void ui.start();
  return ui;
}

if (typeof document !== 'undefined' && document.getElementById('app')) {
  boot(document.getElementById('app') as HTMLElement);
}
