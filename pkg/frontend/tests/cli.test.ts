import * as fs from "fs";
import * as os from "os";
import * as path from "path";

import { describe, expect, it } from "vitest";

import { parseArgs, run } from "../src/cli";

const REF = path.join(__dirname, "fixtures", "reference");

function tmpdir(): string {
  return fs.mkdtempSync(path.join(os.tmpdir(), "figs-"));
}

describe("argument parsing", () => {
  it("requires results and out", () => {
    expect(() => parseArgs([])).toThrowError(/usage/);
  });

  it("rejects unknown formats", () => {
    expect(() => parseArgs(["--results", "a", "--out", "b", "--format", "bmp"]))
      .toThrowError(/svg or png/);
  });
});

describe("end to end", () => {
  it("renders all four figure families as svg", () => {
    const out = tmpdir();
    const rc = run(["--results", REF, "--out", out]);
    expect(rc).toBe(0);
    const files = fs.readdirSync(out).sort();
    expect(files).toEqual([
      "ablation_success.svg",
      "ablation_update_freq.svg",
      "success_vs_arrival_rate.svg",
      "update_freq_vs_arrival_rate.svg",
      "update_interval_density.svg",
    ]);
    for (const f of files) {
      const text = fs.readFileSync(path.join(out, f), "utf8");
      expect(text.startsWith("<svg")).toBe(true);
    }
  });

  it("renders png when asked", () => {
    const out = tmpdir();
    const rc = run(["--results", REF, "--out", out, "--format", "png"]);
    expect(rc).toBe(0);
    const buf = fs.readFileSync(path.join(out, "success_vs_arrival_rate.png"));
    expect(buf.subarray(0, 8)).toEqual(
      Buffer.from([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]));
  });

  it("reruns produce byte-identical svg data", () => {
    const a = tmpdir();
    const b = tmpdir();
    run(["--results", REF, "--out", a]);
    run(["--results", REF, "--out", b]);
    for (const f of fs.readdirSync(a)) {
      expect(fs.readFileSync(path.join(a, f), "utf8"))
        .toBe(fs.readFileSync(path.join(b, f), "utf8"));
    }
  });

  it("fails naming the column on a corrupted results file", () => {
    const broken = tmpdir();
    for (const entry of fs.readdirSync(REF)) {
      const src = path.join(REF, entry);
      fs.cpSync(src, path.join(broken, entry), { recursive: true });
    }
    const file = path.join(broken, "results.csv");
    const lines = fs.readFileSync(file, "utf8").split("\n");
    const header = lines[0].split(",");
    const at = header.indexOf("update_freq");
    fs.writeFileSync(file, lines.filter((l) => l).map(
      (l) => l.split(",").filter((_, i) => i !== at).join(",")).join("\n") + "\n");

    const errors: string[] = [];
    const orig = console.error;
    console.error = (msg: unknown) => errors.push(String(msg));
    const rc = run(["--results", broken, "--out", tmpdir()]);
    console.error = orig;
    expect(rc).toBe(1);
    expect(errors.join("\n")).toMatch(/"update_freq"/);
  });

  it("fails cleanly when the ablation table is absent", () => {
    const partial = tmpdir();
    for (const entry of fs.readdirSync(REF)) {
      if (entry === "ablation_summary.csv") continue;
      fs.cpSync(path.join(REF, entry), path.join(partial, entry), { recursive: true });
    }
    const errors: string[] = [];
    const orig = console.error;
    console.error = (msg: unknown) => errors.push(String(msg));
    const rc = run(["--results", partial, "--out", tmpdir()]);
    console.error = orig;
    expect(rc).toBe(1);
    expect(errors.join("\n")).toMatch(/ablation_summary/);
  });
});
