/**
 * Pure selection state for one knapsack problem.
 *
 * The capacity guard lives here: a toggle that would push the total weight
 * over the limit is refused and reported, so the interface can never
 * compose an infeasible submission (the server re-checks regardless).
 */

export interface ToggleOutcome {
  changed: boolean;
  message: string | null;
}

export class TaskState {
  readonly weights: number[];
  readonly values: number[];
  readonly capacity: number;
  readonly recommendation: number[] | null;
  private selected: boolean[];

  constructor(
    weights: number[],
    values: number[],
    capacity: number,
    recommendation: number[] | null = null,
  ) {
    if (weights.length !== values.length) {
      throw new Error("weights and values must align");
    }
    this.weights = [...weights];
    this.values = [...values];
    this.capacity = capacity;
    this.recommendation = recommendation ? [...recommendation] : null;
    this.selected = weights.map(() => false);
  }

  get itemCount(): number {
    return this.weights.length;
  }

  get currentWeight(): number {
    return this.weights.reduce((sum, w, i) => sum + (this.selected[i] ? w : 0), 0);
  }

  get currentValue(): number {
    return this.values.reduce((sum, v, i) => sum + (this.selected[i] ? v : 0), 0);
  }

  isSelected(index: number): boolean {
    return this.selected[index];
  }

  selection(): number[] {
    return this.selected.map((s) => (s ? 1 : 0));
  }

  /** Deselect always succeeds; select only while the weight allows it. */
  toggle(index: number): ToggleOutcome {
    if (index < 0 || index >= this.itemCount) {
      throw new Error(`item index ${index} out of range`);
    }
    if (this.selected[index]) {
      this.selected[index] = false;
      return { changed: true, message: null };
    }
    const nextWeight = this.currentWeight + this.weights[index];
    if (nextWeight > this.capacity) {
      return {
        changed: false,
        message: `Item ${index + 1} does not fit: ${nextWeight} would exceed the capacity of ${this.capacity}.`,
      };
    }
    this.selected[index] = true;
    return { changed: true, message: null };
  }

  /**
   * Copy the recommendation into the selection. The recommendation came
   * from the server and is feasible, and it remains ordinary advice: the
   * participant can still deselect any of it afterwards.
   */
  adoptRecommendation(): boolean {
    if (!this.recommendation) {
      return false;
    }
    this.selected = this.recommendation.map((bit) => bit === 1);
    return true;
  }

  clear(): void {
    this.selected = this.selected.map(() => false);
  }

  recommendationValue(): number | null {
    if (!this.recommendation) {
      return null;
    }
    return this.values.reduce(
      (sum, v, i) => sum + (this.recommendation![i] === 1 ? v : 0),
      0,
    );
  }
}
