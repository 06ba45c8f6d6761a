/** Microphone capture into Float32 buffers with a live level callback.
 *
 * Captures through the Web Audio graph (not MediaRecorder) so the take
 * can be WAV-encoded losslessly at the context's native rate; recording
 * hard-stops at the clip limit.
 */
import { MAX_CLIP_SECONDS, Take } from "./session.js";
import { mergeBuffers, rmsLevel } from "./wav.js";

export class MicRecorder {
  private chunks: Float32Array[] = [];
  private ctx: AudioContext | null = null;
  private stream: MediaStream | null = null;
  private processor: ScriptProcessorNode | null = null;
  private captured = 0;
  private onAutoStop: (() => void) | null = null;

  constructor(private readonly onLevel: (rms: number) => void) {}

  get recording(): boolean {
    return this.ctx !== null;
  }

  async start(onAutoStop: () => void): Promise<void> {
    if (this.recording) throw new Error("already recording");
    this.stream = await navigator.mediaDevices.getUserMedia({ audio: true });
    this.ctx = new AudioContext();
    this.chunks = [];
    this.captured = 0;
    this.onAutoStop = onAutoStop;
    const source = this.ctx.createMediaStreamSource(this.stream);
    this.processor = this.ctx.createScriptProcessor(4096, 1, 1);
    const maxSamples = MAX_CLIP_SECONDS * this.ctx.sampleRate;
    this.processor.onaudioprocess = (e) => {
      const data = e.inputBuffer.getChannelData(0);
      this.chunks.push(new Float32Array(data));
      this.captured += data.length;
      this.onLevel(rmsLevel(data));
      if (this.captured >= maxSamples && this.onAutoStop) {
        const cb = this.onAutoStop;
        this.onAutoStop = null;
        cb();
      }
    };
    source.connect(this.processor);
    this.processor.connect(this.ctx.destination);
  }

  async stop(): Promise<Take> {
    if (!this.ctx || !this.stream) throw new Error("not recording");
    const sampleRate = this.ctx.sampleRate;
    this.processor?.disconnect();
    this.stream.getTracks().forEach((t) => t.stop());
    await this.ctx.close();
    this.ctx = null;
    this.stream = null;
    this.processor = null;
    this.onLevel(0);
    return { samples: mergeBuffers(this.chunks), sampleRate };
  }
}
