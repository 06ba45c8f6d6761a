/** WAV (PCM16) encoding of captured audio.
 *
 * Browsers cannot record WAV natively, and the server only ingests
 * 16-bit PCM WAV, so captured Float32 buffers are encoded client-side at
 * whatever sample rate the audio context ran at; the server resamples.
 */

export function mergeBuffers(chunks: Float32Array[]): Float32Array {
  let total = 0;
  for (const c of chunks) total += c.length;
  const out = new Float32Array(total);
  let pos = 0;
  for (const c of chunks) {
    out.set(c, pos);
    pos += c.length;
  }
  return out;
}

export function encodeWavPcm16(samples: Float32Array, sampleRate: number): ArrayBuffer {
  const buffer = new ArrayBuffer(44 + samples.length * 2);
  const view = new DataView(buffer);
  const writeAscii = (offset: number, text: string) => {
    for (let i = 0; i < text.length; i++) view.setUint8(offset + i, text.charCodeAt(i));
  };
  writeAscii(0, "RIFF");
  view.setUint32(4, 36 + samples.length * 2, true);
  writeAscii(8, "WAVE");
  writeAscii(12, "fmt ");
  view.setUint32(16, 16, true);
  view.setUint16(20, 1, true); // integer PCM
  view.setUint16(22, 1, true); // mono
  view.setUint32(24, sampleRate, true);
  view.setUint32(28, sampleRate * 2, true);
  view.setUint16(32, 2, true);
  view.setUint16(34, 16, true);
  writeAscii(36, "data");
  view.setUint32(40, samples.length * 2, true);
  for (let i = 0; i < samples.length; i++) {
    const s = Math.max(-1, Math.min(1, samples[i]));
    view.setInt16(44 + i * 2, Math.round(s * 32767), true);
  }
  return buffer;
}

/** Root-mean-square level of a capture chunk, for the live meter. */
export function rmsLevel(chunk: Float32Array): number {
  if (chunk.length === 0) return 0;
  let acc = 0;
  for (let i = 0; i < chunk.length; i++) acc += chunk[i] * chunk[i];
  return Math.sqrt(acc / chunk.length);
}
