#!/usr/bin/env python3
"""
Rebuild the simulation tables: run `cli.py benchmark` for every table in
parallel, then merge the CSV outputs alongside the reference values.

    python run_pipeline.py            # full tables (slow)
    RCT_PIPELINE_REPS=5 python run_pipeline.py
"""

import os
import subprocess
import sys
from concurrent.futures import ThreadPoolExecutor, as_completed

OUTPUT_DIR = os.environ.get('RCT_OUTPUT_DIR', 'tables')
REPLICATIONS = os.environ.get('RCT_PIPELINE_REPS', '20')
TIMEOUT = int(os.environ.get('RCT_PIPELINE_TIMEOUT', '86400'))

# (name, model labels, extra benchmark flags)
TABLES = [
    ("AR(1) designs", "1a,2a,3a,1b,2b,3b,1c,2c,3c", []),
    ("Compound-symmetry designs", "4a,5a,6a,4b,5b,6b,4c,5c,6c", []),
    ("Gaussian-process images", "7a,8a,7b,8b,7c,8c", []),
    ("Gaussian-process images, 25 regions", "9a,10a,9b,10b,9c,10c", ["--methods", "rct,lasso"]),
]


def table_prefix(models):
    return os.path.join(OUTPUT_DIR, "models_" + models.replace(',', '_'))


def run_command(name, command):
    """Run a command and return (name, success, output)."""
    try:
        result = subprocess.run(command, capture_output=True, text=True, timeout=TIMEOUT)
        output = result.stdout + result.stderr
        if result.returncode != 0:
            return name, False, output
        summary = ''
        for line in reversed(result.stdout.strip().splitlines()):
            if line.strip():
                summary = line.strip()
                break
        return name, True, summary
    except subprocess.TimeoutExpired:
        return name, False, f"timed out after {TIMEOUT}s"
    except Exception as e:
        return name, False, str(e)


def benchmark_command(models, extra):
    return [sys.executable, "cli.py", "benchmark", "--models", models, "--replications", REPLICATIONS,
            "--output", table_prefix(models), *extra]


def main():
    print("=" * 60)
    print("Simulation Table Pipeline")
    print("=" * 60)
    os.makedirs(OUTPUT_DIR, exist_ok=True)

    print(f"\nPhase 1: Benchmarks ({len(TABLES)} tables in parallel, {REPLICATIONS} replications)...")
    failures = []
    with ThreadPoolExecutor(max_workers=len(TABLES)) as executor:
        futures = {
            executor.submit(run_command, name, benchmark_command(models, extra)): name
            for name, models, extra in TABLES
        }
        for future in as_completed(futures):
            name, success, output = future.result()
            if success:
                print(f"  [OK]   {name}: {output}")
            else:
                print(f"  [FAIL] {name}")
                print(f"         {output[-300:]}")
                failures.append(name)

    if failures:
        print(f"\nWARNING: {len(failures)} table(s) failed: {', '.join(failures)}")
        print("Continuing with available tables...\n")

    print("\nPhase 2: Summary...")
    csv_files = [f"{table_prefix(models)}.csv" for _, models, _ in TABLES]
    summary_path = os.path.join(OUTPUT_DIR, "tables_summary.json")
    name, success, output = run_command(
        "Summary", [sys.executable, "summarize_tables.py", "--output", summary_path, *csv_files])
    if not success:
        print(f"  [FAIL] {name}: {output[:300]}")
        sys.exit(1)
    print(f"  [OK]   {output}")

    print("\n" + "=" * 60)
    print("Pipeline complete!")
    print("=" * 60)


if __name__ == "__main__":
    main()
