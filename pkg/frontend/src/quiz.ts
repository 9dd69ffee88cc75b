/**
 * Comprehension quiz for the payment structure. Participants must answer
 * every question correctly before the practice phase unlocks; wrong
 * answers can be corrected and re-checked.
 */

export interface QuizQuestion {
  id: string;
  prompt: string;
  options: string[];
  correct: number;
}

export function quizQuestions(bonusPencePerPoint: number): QuizQuestion[] {
  return [
    {
      id: "base",
      prompt: "When do you receive the base payment of £2.00?",
      options: [
        "Always, regardless of performance",
        "If my average score is at least 70% of the best possible value",
        "Only if I solve every problem perfectly",
      ],
      correct: 1,
    },
    {
      id: "bonus",
      prompt: `How much extra do you earn per percentage point above 70%?`,
      options: [
        "Nothing",
        `£0.0${bonusPencePerPoint} per point`,
        `${bonusPencePerPoint} pence per point`,
      ],
      correct: 2,
    },
    {
      id: "average",
      prompt: "Which problems count toward your payment?",
      options: [
        "The two practice problems",
        "The average over the ten main problems",
        "Only the final problem",
      ],
      correct: 1,
    },
  ];
}

export function checkAnswers(
  questions: QuizQuestion[],
  answers: Map<string, number>,
): string[] {
  return questions
    .filter((q) => answers.get(q.id) !== q.correct)
    .map((q) => q.id);
}
