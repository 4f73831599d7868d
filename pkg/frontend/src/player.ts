// One stimulus plays at a time: starting any sound stops the current one.

export interface PlayableAudio {
  play(): Promise<void> | void;
  pause(): void;
  currentTime: number;
}

export type AudioFactory = (url: string) => PlayableAudio;

export class ExclusivePlayer {
  private current: PlayableAudio | null = null;
  private cache = new Map<string, PlayableAudio>();

  constructor(private readonly factory: AudioFactory) {}

  async play(url: string): Promise<void> {
    this.stop();
    let audio = this.cache.get(url);
    if (!audio) {
      audio = this.factory(url);
      this.cache.set(url, audio);
    }
    audio.currentTime = 0;
    this.current = audio;
    await audio.play();
  }

  stop(): void {
    if (this.current) {
      this.current.pause();
      this.current = null;
    }
  }

  reset(): void {
    this.stop();
    this.cache.clear();
  }
}
