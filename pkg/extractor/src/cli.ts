#!/usr/bin/env node
/**
 * Command line for the feature extractor.
 *
 *   extract --dataset <dir> --backbones id1,id2 [--split train] [--batch-size 16] --out <dir>
 *   verify  --manifest <path>
 *
 * Exit codes: 0 ok, 1 usage, 2 unknown backbone, 3 backbone load/download
 * failure, 4 empty or missing dataset, 5 verification failure.
 */

import { BackboneLoadError, UnknownBackboneError } from './backbones'
import { EmptyDatasetError } from './images'
import { extract } from './extract'
import { verify } from './verify'

const EXIT_USAGE = 1
const EXIT_UNKNOWN_BACKBONE = 2
const EXIT_LOAD_FAILURE = 3
const EXIT_EMPTY_DATASET = 4
const EXIT_VERIFY_FAILED = 5

function parseFlags(argv: string[]): Map<string, string> {
  const flags = new Map<string, string>()
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i]
    if (!key.startsWith('--') || i + 1 >= argv.length) {
      throw new Error(`malformed flag near "${key}"`)
    }
    flags.set(key.slice(2), argv[i + 1])
  }
  return flags
}

function required(flags: Map<string, string>, name: string): string {
  const value = flags.get(name)
  if (value === undefined) {
    throw new Error(`missing required flag --${name}`)
  }
  return value
}

async function runExtract(argv: string[]): Promise<number> {
  const flags = parseFlags(argv)
  const job = {
    dataset: required(flags, 'dataset'),
    backbones: required(flags, 'backbones').split(',').filter(s => s.length > 0),
    split: flags.get('split') ?? 'train',
    outDir: required(flags, 'out'),
    batchSize: parseInt(flags.get('batch-size') ?? '16', 10),
  }
  if (job.backbones.length === 0) {
    throw new Error('--backbones lists no ids')
  }
  const result = await extract(job)
  console.log(
    `extracted ${result.n} samples x ${result.dims.join(', ')} dims ` +
    `into ${result.viewPaths.length} views`,
  )
  console.log(`manifest: ${result.manifestPath}`)
  return 0
}

function runVerify(argv: string[]): number {
  const flags = parseFlags(argv)
  const report = verify(required(flags, 'manifest'))
  for (const v of report.views) {
    console.log(`view ${v.path}: n=${v.n} dim=${v.dim} backbone=${v.backbone}`)
  }
  if (report.labels) {
    console.log(`labels ${report.labels.path}: n=${report.labels.n}`)
  }
  if (!report.ok) {
    for (const p of report.problems) {
      console.error(`FAIL: ${p}`)
    }
    return EXIT_VERIFY_FAILED
  }
  console.log('verification passed')
  return 0
}

export async function main(argv: string[]): Promise<number> {
  const [command, ...rest] = argv
  try {
    if (command === 'extract') {
      return await runExtract(rest)
    }
    if (command === 'verify') {
      return runVerify(rest)
    }
    console.error('usage: msrl-extract <extract|verify> --flags ...')
    return EXIT_USAGE
  } catch (e) {
    if (e instanceof UnknownBackboneError) {
      console.error(`unknown backbone: ${e.message}`)
      return EXIT_UNKNOWN_BACKBONE
    }
    if (e instanceof BackboneLoadError) {
      console.error(`backbone load failure: ${e.message}`)
      return EXIT_LOAD_FAILURE
    }
    if (e instanceof EmptyDatasetError) {
      console.error(`dataset error: ${e.message}`)
      return EXIT_EMPTY_DATASET
    }
    console.error(`usage error: ${(e as Error).message}`)
    return EXIT_USAGE
  }
}

if (require.main === module) {
  main(process.argv.slice(2)).then(code => {
    process.exitCode = code
  })
}
