/**
 * Independent validation of an extraction output: every referenced file is
 * re-opened through the reader side of the format code, headers are
 * checked, sample counts must agree across views and labels, and every
 * feature value must be finite.
 */

import * as path from 'path'
import { FormatError, readLabels, readManifest, readView } from './formats'

export interface VerifyReport {
  manifest: string
  views: { path: string; n: number; dim: number; backbone: string }[]
  labels: { path: string; n: number } | null
  ok: boolean
  problems: string[]
}

export function verify(manifestPath: string): VerifyReport {
  const report: VerifyReport = {
    manifest: manifestPath,
    views: [],
    labels: null,
    ok: true,
    problems: [],
  }
  const baseDir = path.dirname(manifestPath)
  let manifest
  try {
    manifest = readManifest(manifestPath)
  } catch (e) {
    report.ok = false
    report.problems.push((e as Error).message)
    return report
  }

  let expectedN: number | null = null
  for (const entry of manifest.views) {
    const viewPath = path.join(baseDir, entry.path)
    try {
      const { header, data } = readView(viewPath)
      report.views.push({
        path: entry.path,
        n: header.n,
        dim: header.dim,
        backbone: entry.backbone,
      })
      if (expectedN === null) {
        expectedN = header.n
      } else if (header.n !== expectedN) {
        report.ok = false
        report.problems.push(
          `alignment: ${entry.path} has n=${header.n}, expected ${expectedN}`,
        )
      }
      for (let i = 0; i < data.length; i++) {
        if (!Number.isFinite(data[i])) {
          report.ok = false
          report.problems.push(`${entry.path}: non-finite value at index ${i}`)
          break
        }
      }
    } catch (e) {
      report.ok = false
      report.problems.push(
        e instanceof FormatError ? e.message : `${viewPath}: ${(e as Error).message}`,
      )
    }
  }

  if (manifest.labels) {
    const labelsPath = path.join(baseDir, manifest.labels)
    try {
      const labels = readLabels(labelsPath)
      report.labels = { path: manifest.labels, n: labels.length }
      if (expectedN !== null && labels.length !== expectedN) {
        report.ok = false
        report.problems.push(
          `alignment: labels have n=${labels.length}, views have n=${expectedN}`,
        )
      }
      if (manifest.clusters !== undefined) {
        for (const v of labels) {
          if (v < 0 || v >= manifest.clusters) {
            report.ok = false
            report.problems.push(`labels: value ${v} outside [0, ${manifest.clusters})`)
            break
          }
        }
      }
    } catch (e) {
      report.ok = false
      report.problems.push((e as Error).message)
    }
  }
  return report
}
