import { ApiError, Demographics, StudyApi, TrialPayload } from "./api.js";
import { AudioFactory, ExclusivePlayer } from "./player.js";

const STIMULUS_LABELS = ["Sound A", "Sound B", "Sound C", "Sound D", "Sound E"];
const SCALE_BANDS = ["bad", "poor", "fair", "good", "excellent"];
const SESSION_KEY = "study-session-id";

const DEMOGRAPHIC_FIELDS: Array<{
  name: keyof Demographics;
  label: string;
  options: Array<[string, string]>;
}> = [
  {
    name: "age_bracket",
    label: "Your age bracket",
    options: [
      ["18-24", "18 to 24"],
      ["25-50", "25 to 50"],
      ["over-50", "Over 50"],
    ],
  },
  {
    name: "production_familiarity",
    label: "Familiarity with music production tools",
    options: [
      ["not-at-all", "Not at all familiar"],
      ["slightly", "Slightly familiar"],
      ["moderately", "Moderately familiar"],
      ["very", "Very familiar"],
      ["extremely", "Extremely familiar"],
    ],
  },
  {
    name: "synthesis_knowledge",
    label: "Knowledge of sound synthesis techniques",
    options: [
      ["not-at-all", "Not very knowledgeable"],
      ["slightly", "Slightly knowledgeable"],
      ["moderately", "Moderately knowledgeable"],
      ["very", "Very knowledgeable"],
      ["extremely", "Extremely knowledgeable"],
    ],
  },
  {
    name: "equipment_spend",
    label: "Money spent on your audio equipment",
    options: [
      ["under-100", "Under $100"],
      ["100-250", "$100 to $250"],
      ["250-500", "$250 to $500"],
      ["500-750", "$500 to $750"],
      ["over-750", "Over $750"],
    ],
  },
];

export interface AppOptions {
  root: HTMLElement;
  api: StudyApi;
  audioFactory: AudioFactory;
  storage?: Pick<Storage, "getItem" | "setItem" | "removeItem">;
  window?: Pick<Window, "addEventListener" | "removeEventListener">;
}

export class StudyApp {
  private readonly root: HTMLElement;
  private readonly api: StudyApi;
  private readonly player: ExclusivePlayer;
  private readonly storage: AppOptions["storage"];
  private readonly win: AppOptions["window"];
  private sessionId: string | null = null;
  private inTrial = false;
  private readonly beforeUnload = (ev: Event) => {
    if (this.inTrial) {
      ev.preventDefault();
    }
  };

  constructor(options: AppOptions) {
    this.root = options.root;
    this.api = options.api;
    this.player = new ExclusivePlayer(options.audioFactory);
    this.storage = options.storage;
    this.win = options.window;
  }

  async start(): Promise<void> {
    this.win?.addEventListener("beforeunload", this.beforeUnload);
    const stored = this.storage?.getItem(SESSION_KEY);
    if (stored) {
      // reload mid-study: the server is the source of truth for progress
      this.sessionId = stored;
      await this.showCurrentTrial();
      return;
    }
    this.showDemographics();
  }

  // -- demographics ---------------------------------------------------------

  private showDemographics(): void {
    const fields = DEMOGRAPHIC_FIELDS.map(
      (f) => `
      <label class="demo-field">${f.label}
        <select name="${f.name}" required>
          <option value="" selected disabled>Choose one</option>
          ${f.options.map(([v, text]) => `<option value="${v}">${text}</option>`).join("")}
        </select>
      </label>`,
    ).join("");
    this.root.innerHTML = `
      <section class="screen" data-screen="demographics">
        <h1>Listening study</h1>
        <p>You will rate the quality of short sounds against a reference
           recording. Please use good headphones or speakers in a quiet
           room. First, a few questions about you.</p>
        <form id="demographics-form">${fields}
          <p class="error" id="demo-error" hidden></p>
          <button type="submit">Continue</button>
        </form>
      </section>`;
    const form = this.root.querySelector<HTMLFormElement>("#demographics-form")!;
    form.addEventListener("submit", (ev) => {
      ev.preventDefault();
      void this.submitDemographics(form);
    });
  }

  private async submitDemographics(form: HTMLFormElement): Promise<void> {
    const demographics = {} as Demographics;
    for (const field of DEMOGRAPHIC_FIELDS) {
      const select = form.querySelector<HTMLSelectElement>(`[name="${field.name}"]`)!;
      if (!select.value) {
        this.showError("#demo-error", "Please answer every question.");
        return;
      }
      demographics[field.name] = select.value;
    }
    try {
      const info = await this.api.createSession(demographics);
      this.sessionId = info.session_id;
      this.storage?.setItem(SESSION_KEY, info.session_id);
      await this.showTraining();
    } catch (err) {
      this.showError("#demo-error", describe(err));
    }
  }

  // -- training -------------------------------------------------------------

  private async showTraining(): Promise<void> {
    const trial = await this.api.practiceTrial(this.sessionId!);
    this.renderTrialScreen(trial, {
      practice: true,
      heading: "Training",
      intro:
        "This practice round shows how each trial works. Listen to the " +
        "reference, then listen to every sound below and move its slider " +
        "to rate how close it comes to the reference. Nothing is recorded " +
        "on this page.",
      submitLabel: "Begin the study",
      onSubmit: async () => {
        await this.showCurrentTrial();
      },
    });
  }

  // -- trials ---------------------------------------------------------------

  private async showCurrentTrial(): Promise<void> {
    let payload;
    try {
      payload = await this.api.currentTrial(this.sessionId!);
    } catch (err) {
      if (err instanceof ApiError && err.status === 404) {
        this.storage?.removeItem(SESSION_KEY);
        this.sessionId = null;
        this.showDemographics();
        return;
      }
      throw err;
    }
    if (payload.status === "complete") {
      this.showDone();
      return;
    }
    const trial = payload;
    this.renderTrialScreen(trial, {
      practice: false,
      heading: `Trial ${trial.trial_index + 1} of ${trial.trials_per_session}`,
      intro:
        "Rate each sound on its quality compared to the reference. " +
        "You must listen to every sound and touch every slider before " +
        "submitting.",
      submitLabel: "Submit ratings",
      onSubmit: async (ratings) => {
        await this.api.submitRatings(this.sessionId!, trial.trial_index, ratings);
        await this.showCurrentTrial();
      },
    });
  }

  private renderTrialScreen(
    trial: TrialPayload,
    opts: {
      practice: boolean;
      heading: string;
      intro: string;
      submitLabel: string;
      onSubmit: (ratings: Record<string, number>) => Promise<void>;
    },
  ): void {
    this.inTrial = !opts.practice;
    this.player.reset();
    const rows = trial.sliders
      .map(
        (stim, i) => `
      <div class="stimulus-row" data-slider="${stim.slider_id}">
        <button type="button" class="play" data-url="${stim.audio_url}">
          Play ${STIMULUS_LABELS[i]}
        </button>
        <div class="slider-wrap">
          <input type="range" min="0" max="100" step="1" value="50"
                 aria-label="${STIMULUS_LABELS[i]} rating" />
          <div class="scale-legend">${SCALE_BANDS.map((b) => `<span>${b}</span>`).join("")}</div>
        </div>
        <output>50</output>
      </div>`,
      )
      .join("");
    this.root.innerHTML = `
      <section class="screen" data-screen="${opts.practice ? "training" : "trial"}">
        <h1>${opts.heading}</h1>
        <p>${opts.intro}</p>
        <div class="reference-row">
          <button type="button" class="play reference-play"
                  data-url="${trial.reference_url}">Play reference</button>
        </div>
        <div class="stimuli">${rows}</div>
        <p class="error" id="trial-error" hidden></p>
        <p class="gate-hint" id="gate-hint"></p>
        <button id="submit" disabled>${opts.submitLabel}</button>
      </section>`;

    const played = new Set<string>();
    const touched = new Set<string>();
    const submit = this.root.querySelector<HTMLButtonElement>("#submit")!;
    const hint = this.root.querySelector<HTMLElement>("#gate-hint")!;
    const sliderIds = trial.sliders.map((s) => s.slider_id);

    const refreshGate = () => {
      const unplayed = sliderIds.length - played.size;
      const untouched = sliderIds.length - touched.size;
      if (opts.practice) {
        submit.disabled = false;
        hint.textContent = "";
        return;
      }
      submit.disabled = unplayed > 0 || untouched > 0;
      if (unplayed > 0) {
        hint.textContent = `Listen to ${unplayed} more sound${unplayed > 1 ? "s" : ""} before submitting.`;
      } else if (untouched > 0) {
        hint.textContent = `Move ${untouched} more slider${untouched > 1 ? "s" : ""} before submitting.`;
      } else {
        hint.textContent = "";
      }
    };
    refreshGate();

    this.root.querySelectorAll<HTMLButtonElement>("button.play").forEach((btn) => {
      btn.addEventListener("click", () => {
        void this.player.play(btn.dataset.url!).then(() => {
          const row = btn.closest<HTMLElement>(".stimulus-row");
          if (row) {
            played.add(row.dataset.slider!);
          }
          refreshGate();
        });
      });
    });

    this.root.querySelectorAll<HTMLElement>(".stimulus-row").forEach((row) => {
      const slider = row.querySelector<HTMLInputElement>("input[type=range]")!;
      const output = row.querySelector<HTMLOutputElement>("output")!;
      slider.addEventListener("input", () => {
        touched.add(row.dataset.slider!);
        output.textContent = slider.value;
        refreshGate();
      });
    });

    submit.addEventListener("click", () => {
      const ratings: Record<string, number> = {};
      this.root.querySelectorAll<HTMLElement>(".stimulus-row").forEach((row) => {
        const slider = row.querySelector<HTMLInputElement>("input[type=range]")!;
        ratings[row.dataset.slider!] = Math.round(Number(slider.value));
      });
      submit.disabled = true;
      this.player.stop();
      opts.onSubmit(ratings).catch((err) => {
        // keep the slider state; the participant just retries
        submit.disabled = false;
        this.showError("#trial-error", `${describe(err)} — your ratings are kept, try again.`);
      });
    });
  }

  // -- terminal screens -----------------------------------------------------

  private showDone(): void {
    this.inTrial = false;
    this.player.reset();
    this.storage?.removeItem(SESSION_KEY);
    this.win?.removeEventListener("beforeunload", this.beforeUnload);
    this.root.innerHTML = `
      <section class="screen" data-screen="done">
        <h1>Thank you!</h1>
        <p>Your ratings have been recorded. You can close this tab now.</p>
      </section>`;
  }

  private showError(selector: string, message: string): void {
    const el = this.root.querySelector<HTMLElement>(selector);
    if (el) {
      el.textContent = message;
      el.hidden = false;
    }
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) {
    return err.status === 0 ? "Could not reach the server" : err.message;
  }
  return String(err);
}
