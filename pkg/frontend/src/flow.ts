/**
 * Screen flow for one participant session:
 *
 *   tutorial (5 pages) -> comprehension quiz (only when assigned)
 *     -> practice (2, with feedback) -> main (10, timed) -> score screen
 *
 * The order is strict; screens only advance. Back navigation and reloads
 * are handled outside this class by invalidating the session.
 */

import { ApiError, ProblemView, SessionInfo, StudyClient, Treatment } from "./api.js";
import { checkAnswers, quizQuestions } from "./quiz.js";
import { TaskState } from "./task.js";
import { Countdown } from "./timer.js";
import {
  TUTORIAL_PAGES,
  refreshTask,
  renderDead,
  renderError,
  renderFeedback,
  renderQuiz,
  renderScore,
  renderTask,
  renderTutorial,
  updateTimer,
} from "./ui.js";

const BONUS_PENCE: Record<string, number> = { none: 0, b2: 2, b10: 10, b20: 20 };

export interface FlowOptions {
  mode?: string;
  seed?: number;
  treatment?: Treatment;
}

export class ParticipantApp {
  session: SessionInfo | null = null;
  private view: ProblemView | null = null;
  private task: TaskState | null = null;
  private countdown: Countdown;
  private tutorialPage = 1;
  private submitting = false;
  private settledProblems = 0;

  constructor(
    private root: HTMLElement,
    private api: StudyClient,
    private options: FlowOptions = {},
  ) {
    this.countdown = new Countdown(
      (remaining) => updateTimer(this.root, remaining),
      () => void this.submitCurrent(true),
    );
  }

  async start(): Promise<SessionInfo> {
    this.session = await this.api.createSession(
      this.options.mode ?? "random",
      this.options.seed ?? Math.floor(Math.random() * 2 ** 31),
      this.options.treatment,
    );
    this.showTutorial();
    return this.session;
  }

  get treatment(): Treatment {
    if (!this.session) {
      throw new Error("session not started");
    }
    return this.session.treatment;
  }

  private showTutorial(): void {
    renderTutorial(
      this.root,
      this.tutorialPage,
      this.treatment,
      BONUS_PENCE[this.treatment.bonus] ?? 0,
      () => {
        if (this.tutorialPage < TUTORIAL_PAGES) {
          this.tutorialPage += 1;
          this.showTutorial();
        } else if (this.treatment.comprehension_quiz) {
          this.showQuiz();
        } else {
          void this.showNextProblem();
        }
      },
    );
  }

  private showQuiz(): void {
    const questions = quizQuestions(BONUS_PENCE[this.treatment.bonus] ?? 0);
    renderQuiz(
      this.root,
      questions,
      (answers) => checkAnswers(questions, answers),
      () => void this.showNextProblem(),
    );
  }

  private async showNextProblem(): Promise<void> {
    try {
      this.view = await this.api.nextProblem(this.session!.session_id);
    } catch (error) {
      this.fail(error);
      return;
    }
    const view = this.view;
    this.task = new TaskState(view.weights, view.values, view.capacity, view.recommendation);
    this.submitting = false;
    renderTask(this.root, view, this.task, {
      onToggle: (index) => {
        const outcome = this.task!.toggle(index);
        refreshTask(this.root, this.task!, outcome.message);
      },
      onAdopt: () => {
        this.task!.adoptRecommendation();
        refreshTask(this.root, this.task!, null);
      },
      onSubmit: () => void this.submitCurrent(false),
    });
    this.countdown.start(view.remaining_ms);
  }

  private async submitCurrent(auto: boolean): Promise<void> {
    if (!this.view || !this.task || this.submitting) {
      return;
    }
    this.submitting = true;
    this.countdown.stop();
    const view = this.view;
    const elapsed = this.countdown.elapsedOf(view.time_limit_ms);
    try {
      const result = await this.api.submit(
        this.session!.session_id,
        view.problem_index,
        this.task.selection(),
        elapsed,
        auto,
      );
      this.settledProblems += 1;
      const isLastMain =
        view.phase === "main" && view.problem_index === this.session!.n_main;
      renderFeedback(
        this.root,
        view.phase,
        result.feedback ? result.feedback.econ_percent : null,
        result.auto_submitted,
        () => (isLastMain ? void this.showScore() : void this.showNextProblem()),
        isLastMain,
      );
    } catch (error) {
      this.fail(error);
    }
  }

  private async showScore(): Promise<void> {
    try {
      const score = await this.api.finalize(this.session!.session_id);
      renderScore(this.root, score);
    } catch (error) {
      this.fail(error);
    }
  }

  async invalidate(reason: string): Promise<void> {
    this.countdown.stop();
    if (this.session) {
      try {
        await this.api.invalidate(this.session.session_id, reason);
      } catch {
        // the session may already be closed; the dead screen still applies
      }
    }
    renderDead(this.root, reason);
  }

  private fail(error: unknown): void {
    this.countdown.stop();
    const detail =
      error instanceof ApiError ? `${error.kind}: ${error.message}` : String(error);
    renderError(this.root, detail);
  }
}
