/** State for the five-criterion Likert rating form. */

export const RATING_CRITERIA = [
  "object_precision",
  "grounding_recall",
  "description_accuracy",
  "language_quality",
  "overall_quality",
] as const;

export const CRITERIA_LABELS: Record<(typeof RATING_CRITERIA)[number], string> = {
  object_precision: "Object grounding precision",
  grounding_recall: "Grounding recall",
  description_accuracy: "Description accuracy",
  language_quality: "Language quality",
  overall_quality: "Overall quality",
};

export class RatingFormState {
  values: (number | null)[] = [null, null, null, null, null];

  setCriterion(index: number, value: number): void {
    if (index < 0 || index >= RATING_CRITERIA.length) {
      throw new Error(`criterion index ${index} out of range`);
    }
    if (!Number.isInteger(value) || value < 1 || value > 5) {
      throw new Error(`rating must be an integer 1..5, got ${value}`);
    }
    this.values[index] = value;
  }

  /** Submission is possible only once every criterion has a value. */
  get submitEnabled(): boolean {
    return this.values.every((v) => v !== null);
  }

  payload(): { criteria: number[] } {
    if (!this.submitEnabled) throw new Error("all five criteria must be set");
    return { criteria: this.values.map((v) => v as number) };
  }

  reset(): void {
    this.values = [null, null, null, null, null];
  }
}
