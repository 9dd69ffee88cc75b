/** DOM rendering for the participant screens. */

import { ProblemView, ScoreScreen, Treatment } from "./api.js";
import { QuizQuestion } from "./quiz.js";
import { TaskState } from "./task.js";
import { formatRemaining } from "./timer.js";

export const TUTORIAL_PAGES = 5;

function el<T extends HTMLElement = HTMLElement>(root: ParentNode, selector: string): T {
  const node = root.querySelector(selector);
  if (!node) {
    throw new Error(`missing element ${selector}`);
  }
  return node as T;
}

export function renderTutorial(
  root: HTMLElement,
  page: number,
  treatment: Treatment,
  bonusPence: number,
  onNext: () => void,
): void {
  const pages: string[] = [
    `<h2>Welcome</h2>
     <p>You will pack a knapsack: choose items to maximize their total value
     without exceeding the weight capacity.</p>`,
    `<h2>The interface</h2>
     <p>Click a gray item to add it to the knapsack; click a green item to
     remove it. The totals at the top update automatically, and the
     interface will refuse any item that does not fit.</p>`,
    treatment.ml_arm !== "none"
      ? `<h2>Machine advice</h2>
         <p>A machine learning model suggests a solution for each problem.
         Suggested items are outlined, and one click adopts the whole
         suggestion. You are free to change or ignore it.</p>`
      : `<h2>On your own</h2>
         <p>You will solve each problem without machine suggestions.</p>`,
    `<h2>Payment</h2>
     <p>You receive a base payment of £2.00 if your average score over the
     ten main problems reaches 70% of the best possible value.</p>
     ${
       bonusPence > 0
         ? `<p>Each full percentage point above 70% earns an extra ${bonusPence} pence.</p>`
         : `<p>This session carries no performance bonus beyond the base payment.</p>`
     }`,
    `<h2>Timing</h2>
     <p>Each problem allows 3 minutes. When the clock runs out, your current
     selection is submitted automatically. You may rest between problems.</p>`,
  ];
  root.innerHTML = `
    <section id="screen-tutorial" data-page="${page}">
      <div id="tutorial-body">${pages[page - 1]}</div>
      <p class="muted">Tutorial ${page} / ${TUTORIAL_PAGES}</p>
      <button id="tutorial-next">${page < TUTORIAL_PAGES ? "Next" : "Begin"}</button>
    </section>`;
  el(root, "#tutorial-next").addEventListener("click", onNext);
}

export function renderQuiz(
  root: HTMLElement,
  questions: QuizQuestion[],
  onCheck: (answers: Map<string, number>) => string[],
  onPass: () => void,
): void {
  const blocks = questions
    .map(
      (q) => `
      <fieldset class="quiz-q" data-question="${q.id}">
        <legend>${q.prompt}</legend>
        ${q.options
          .map(
            (option, i) => `
          <label><input type="radio" name="${q.id}" value="${i}"> ${option}</label>`,
          )
          .join("")}
      </fieldset>`,
    )
    .join("");
  root.innerHTML = `
    <section id="screen-quiz">
      <h2>Quick check: the payment rules</h2>
      <form id="quiz-form">${blocks}</form>
      <p id="quiz-message" class="error"></p>
      <button id="quiz-check">Check answers</button>
    </section>`;
  el(root, "#quiz-check").addEventListener("click", () => {
    const answers = new Map<string, number>();
    for (const q of questions) {
      const choice = root.querySelector<HTMLInputElement>(`input[name="${q.id}"]:checked`);
      if (choice) {
        answers.set(q.id, Number(choice.value));
      }
    }
    const wrong = onCheck(answers);
    if (wrong.length === 0) {
      onPass();
    } else {
      el(root, "#quiz-message").textContent =
        "Not quite: please revisit the highlighted rules and try again.";
      for (const q of questions) {
        const block = el(root, `[data-question="${q.id}"]`);
        block.classList.toggle("wrong", wrong.includes(q.id));
      }
    }
  });
}

export interface TaskCallbacks {
  onToggle: (index: number) => void;
  onAdopt: () => void;
  onSubmit: () => void;
}

export function renderTask(
  root: HTMLElement,
  view: ProblemView,
  task: TaskState,
  callbacks: TaskCallbacks,
): void {
  const phaseLabel =
    view.phase === "practice"
      ? `Practice problem ${view.problem_index} of ${view.n_problems}`
      : `Problem ${view.problem_index} of ${view.n_problems}`;
  const recPanel =
    task.recommendation !== null
      ? `<aside id="rec-panel">
           <h3>Machine suggestion</h3>
           <p>Suggested value: <strong id="rec-value">${task.recommendationValue()}</strong></p>
           <button id="adopt-rec">Adopt suggestion</button>
         </aside>`
      : "";
  root.innerHTML = `
    <section id="screen-task" data-phase="${view.phase}" data-index="${view.problem_index}">
      <header id="status-bar">
        <span id="phase-banner">${phaseLabel}</span>
        <span>Capacity <strong id="capacity">${task.capacity}</strong></span>
        <span>Weight <strong id="current-weight">0</strong></span>
        <span>Value <strong id="current-value">0</strong></span>
        <span>Time <strong id="timer">--:--</strong></span>
      </header>
      <p id="task-message" class="error" aria-live="polite"></p>
      <div id="item-grid"></div>
      ${recPanel}
      <button id="submit-btn">Submit</button>
    </section>`;

  const grid = el(root, "#item-grid");
  for (let i = 0; i < task.itemCount; i++) {
    const button = document.createElement("button");
    button.className = "item";
    button.dataset.index = String(i);
    button.innerHTML = `<span class="w">${task.weights[i]}kg</span><span class="v">${task.values[i]}p</span>`;
    button.addEventListener("click", () => callbacks.onToggle(i));
    grid.appendChild(button);
  }
  el(root, "#submit-btn").addEventListener("click", callbacks.onSubmit);
  const adopt = root.querySelector("#adopt-rec");
  if (adopt) {
    adopt.addEventListener("click", callbacks.onAdopt);
  }
  refreshTask(root, task);
}

export function refreshTask(root: ParentNode, task: TaskState, message: string | null = null): void {
  el(root, "#current-weight").textContent = String(task.currentWeight);
  el(root, "#current-value").textContent = String(task.currentValue);
  el(root, "#task-message").textContent = message ?? "";
  root.querySelectorAll<HTMLElement>(".item").forEach((node) => {
    const index = Number(node.dataset.index);
    node.classList.toggle("selected", task.isSelected(index));
    node.classList.toggle(
      "rec-highlight",
      task.recommendation !== null && task.recommendation[index] === 1,
    );
  });
}

export function updateTimer(root: ParentNode, remainingMs: number): void {
  const timer = root.querySelector("#timer");
  if (timer) {
    timer.textContent = formatRemaining(remainingMs);
  }
}

export function renderFeedback(
  root: HTMLElement,
  phase: string,
  econPercent: number | null,
  autoSubmitted: boolean,
  onContinue: () => void,
  isLast: boolean,
): void {
  const note = autoSubmitted ? "<p>Time ran out, so your selection was submitted automatically.</p>" : "";
  const body =
    econPercent !== null
      ? `<p>Your practice submission reached <strong id="feedback-percent">${econPercent}%</strong> of the best possible value.</p>`
      : "<p>Submission received.</p>";
  root.innerHTML = `
    <section id="screen-feedback" data-phase="${phase}">
      <h2>${phase === "practice" ? "Practice feedback" : "Submitted"}</h2>
      ${note}
      ${body}
      <button id="continue-btn">${isLast ? "See your score" : "Continue"}</button>
    </section>`;
  el(root, "#continue-btn").addEventListener("click", onContinue);
}

export function renderScore(root: HTMLElement, score: ScoreScreen): void {
  const rows = score.trials
    .map((t) => `<li>Problem ${t.problem_index}: ${t.econ_percent}%</li>`)
    .join("");
  root.innerHTML = `
    <section id="screen-score">
      <h2>Your results</h2>
      <p>Average performance: <strong id="score-mean">${score.mean_econ_percent.toFixed(1)}%</strong></p>
      <p>Payment: <strong id="score-payment">£${(score.payment_pence / 100).toFixed(2)}</strong></p>
      <ol id="score-trials">${rows}</ol>
      <p class="muted">Thank you for taking part. You can close this window.</p>
    </section>`;
}

export function renderDead(root: HTMLElement, reason: string): void {
  root.innerHTML = `
    <section id="screen-dead">
      <h2>Session closed</h2>
      <p>This session was invalidated (${reason}). Reloading or navigating
      back is not permitted during the study.</p>
    </section>`;
}

export function renderError(root: HTMLElement, detail: string): void {
  root.innerHTML = `
    <section id="screen-error">
      <h2>Something went wrong</h2>
      <p class="error">${detail}</p>
    </section>`;
}
