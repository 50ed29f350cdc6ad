/**
 * Node bindings for the convoscribe metrics core.
 *
 * No metric logic lives here: every call shells out to the core CLI through
 * its documented surfaces (the transcript interchange JSON-lines format and
 * the machine-readable scoring report), so binding results are identical to
 * core results by construction. Word-level entry points encode their inputs
 * as single-conversation transcripts, score them in unaligned mode, and read
 * the metrics back out of the report.
 *
 * The core command defaults to `python3 -m convoscribe` and can be overridden
 * with the CONVOSCRIBE_CLI environment variable (whitespace-separated argv).
 */

import { execFile } from "node:child_process";
import { mkdtemp, rm, writeFile } from "node:fs/promises";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { promisify } from "node:util";

const execFileAsync = promisify(execFile);

export type ErrorKind = "validation" | "contract" | "io" | "unknown";

/** Raised when the core CLI exits non-zero; carries the core's error kind. */
export class CoreError extends Error {
  kind: ErrorKind;
  exitCode: number;
  stderr: string;

  constructor(kind: ErrorKind, exitCode: number, stderr: string) {
    super(`convoscribe core failed (${kind}, exit ${exitCode}): ${stderr.trim()}`);
    this.kind = kind;
    this.exitCode = exitCode;
    this.stderr = stderr;
  }
}

/** Raised when a requested rate has a zero denominator in the core. */
export class UndefinedRateError extends Error {}

export interface MetricCounts {
  C: number;
  S: number;
  I: number;
  D: number;
  S_w: number;
  C_w: number;
}

export interface ConversationReport {
  conversation_id: string;
  counts: MetricCounts;
  unterminated_utterances: number;
  wer: number | null;
  wder_identity: number | null;
  mwde: number | null;
  speaker_mapping: Record<string, string>;
}

export interface ScoreReport {
  schema_version: number;
  mode: string;
  normalize: string;
  case_sensitive: boolean;
  conversations: ConversationReport[];
  corpus: {
    pooled: {
      counts: MetricCounts;
      wer: number | null;
      wder_identity: number | null;
      mwde: number | null;
    };
    macro: {
      wer: number | null;
      wder_identity: number | null;
      mwde: number | null;
    };
  };
}

export interface ScoreOptions {
  mode?: "aligned" | "unaligned";
  normalize?: "rich" | "simulated";
  caseSensitive?: boolean;
}

export interface MwdeResult {
  rate: number;
  mapping: Record<string, string>;
}

function coreCommand(): string[] {
  const override = process.env.CONVOSCRIBE_CLI;
  if (override && override.trim().length > 0) {
    return override.trim().split(/\s+/);
  }
  return ["python3", "-m", "convoscribe"];
}

function kindForExit(code: number): ErrorKind {
  if (code === 2) return "validation";
  if (code === 3) return "contract";
  if (code === 4) return "io";
  return "unknown";
}

async function runCore(args: string[]): Promise<string> {
  const [command, ...prefix] = coreCommand();
  try {
    const { stdout } = await execFileAsync(command, [...prefix, ...args], {
      maxBuffer: 256 * 1024 * 1024,
    });
    return stdout;
  } catch (error) {
    const failure = error as { code?: number | string; stderr?: string; message?: string };
    const exitCode = typeof failure.code === "number" ? failure.code : -1;
    throw new CoreError(kindForExit(exitCode), exitCode, failure.stderr ?? failure.message ?? "");
  }
}

/** Score two transcript files; identical semantics to `convoscribe score`. */
export async function scoreFiles(
  hypPath: string,
  refPath: string,
  options: ScoreOptions = {},
): Promise<ScoreReport> {
  const args = ["score", hypPath, refPath];
  args.push("--mode", options.mode ?? "aligned");
  args.push("--normalize", options.normalize ?? "rich");
  if (options.caseSensitive === false) {
    args.push("--case-insensitive");
  }
  const stdout = await runCore(args);
  return JSON.parse(stdout) as ScoreReport;
}

function checkTokens(name: string, tokens: string[]): void {
  for (const token of tokens) {
    if (token.length === 0 || /\s/.test(token)) {
      throw new CoreError("validation", 2, `${name} contains an empty or whitespace token: ${JSON.stringify(token)}`);
    }
  }
}

interface UtteranceRecord {
  conversation_id: string;
  utterance_index: number;
  speaker_id: string;
  start: number;
  end: number;
  text: string;
}

function transcriptLines(words: string[], speakers: string[] | null): string {
  // One utterance per word keeps per-word speaker labels exact; an empty
  // input becomes a single empty utterance so the conversation still exists.
  const records: UtteranceRecord[] = [];
  if (words.length === 0) {
    records.push({
      conversation_id: "binding",
      utterance_index: 0,
      speaker_id: speakers?.[0] ?? "spk",
      start: 0,
      end: 0,
      text: "",
    });
  }
  words.forEach((word, i) => {
    records.push({
      conversation_id: "binding",
      utterance_index: i,
      speaker_id: speakers ? speakers[i] : "spk",
      start: i,
      end: i + 1,
      text: word,
    });
  });
  return records.map((r) => JSON.stringify(r)).join("\n") + "\n";
}

async function scoreWordLists(
  hypWords: string[],
  hypSpeakers: string[] | null,
  refWords: string[],
  refSpeakers: string[] | null,
  caseSensitive: boolean,
): Promise<ConversationReport> {
  checkTokens("hypWords", hypWords);
  checkTokens("refWords", refWords);
  if (hypSpeakers && hypSpeakers.length !== hypWords.length) {
    throw new CoreError("validation", 2, "hypSpeakers must parallel hypWords");
  }
  if (refSpeakers && refSpeakers.length !== refWords.length) {
    throw new CoreError("validation", 2, "refSpeakers must parallel refWords");
  }
  const dir = await mkdtemp(join(tmpdir(), "convoscribe-"));
  try {
    const hypPath = join(dir, "hyp.jsonl");
    const refPath = join(dir, "ref.jsonl");
    await writeFile(hypPath, transcriptLines(hypWords, hypSpeakers), "utf-8");
    await writeFile(refPath, transcriptLines(refWords, refSpeakers), "utf-8");
    const report = await scoreFiles(hypPath, refPath, {
      mode: "unaligned",
      normalize: "rich",
      caseSensitive,
    });
    return report.conversations[0];
  } finally {
    await rm(dir, { recursive: true, force: true });
  }
}

/**
 * Minimum word diarization error over all injective speaker mappings,
 * numerically identical to the core implementation (same engine).
 */
export async function mwde(
  hypWords: string[],
  hypSpeakers: string[],
  refWords: string[],
  refSpeakers: string[],
  caseSensitive = true,
): Promise<MwdeResult> {
  const conversation = await scoreWordLists(
    hypWords, hypSpeakers, refWords, refSpeakers, caseSensitive,
  );
  if (conversation.mwde === null) {
    throw new UndefinedRateError("MWDE is undefined without matched words");
  }
  return { rate: conversation.mwde, mapping: conversation.speaker_mapping };
}

/** Word diarization error rate under the identity speaker mapping. */
export async function wderIdentity(
  hypWords: string[],
  hypSpeakers: string[],
  refWords: string[],
  refSpeakers: string[],
  caseSensitive = true,
): Promise<number> {
  const conversation = await scoreWordLists(
    hypWords, hypSpeakers, refWords, refSpeakers, caseSensitive,
  );
  if (conversation.wder_identity === null) {
    throw new UndefinedRateError("WDER is undefined without matched words");
  }
  return conversation.wder_identity;
}

/** Word error rate between two word sequences. */
export async function wer(
  hypWords: string[],
  refWords: string[],
  caseSensitive = true,
): Promise<number> {
  const conversation = await scoreWordLists(hypWords, null, refWords, null, caseSensitive);
  if (conversation.wer === null) {
    throw new UndefinedRateError("WER is undefined for an empty reference");
  }
  return conversation.wer;
}

/** Levenshtein alignment counts (correct/substituted/inserted/deleted). */
export async function alignCounts(
  hypWords: string[],
  refWords: string[],
  caseSensitive = true,
): Promise<MetricCounts> {
  const conversation = await scoreWordLists(hypWords, null, refWords, null, caseSensitive);
  return conversation.counts;
}

/** Conversation-level WER straight from two transcript files. */
export async function conversationWer(
  hypPath: string,
  refPath: string,
  options: ScoreOptions = {},
): Promise<number> {
  const report = await scoreFiles(hypPath, refPath, options);
  const rate = report.corpus.pooled.wer;
  if (rate === null) {
    throw new UndefinedRateError("WER is undefined for an empty reference");
  }
  return rate;
}

export const CORE_VERSION = "0.1.0";
