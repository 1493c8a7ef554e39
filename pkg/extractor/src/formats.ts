/**
 * Binary feature/label file formats consumed by the clustering engine.
 *
 * View file:  "MVFV" | u32 version=1 | u64 n | u32 dim | u32 dtype(0=f32) | n*dim f32
 * Label file: "MVLB" | u32 version=1 | u64 n | n * i32
 * Manifest:   JSON { views: [{path, backbone}], labels?, clusters?, ... }
 *
 * Everything is little-endian. The readers here are written independently
 * of the writers so `verify` re-checks real bytes, not shared code paths.
 */

import * as fs from 'fs'
import * as path from 'path'

export const VIEW_MAGIC = 'MVFV'
export const LABEL_MAGIC = 'MVLB'
export const FORMAT_VERSION = 1

export interface ViewHeader {
  n: number
  dim: number
  dtype: number
}

export interface ManifestView {
  path: string
  backbone: string
}

export interface Manifest {
  views: ManifestView[]
  labels?: string
  clusters?: number
  samples?: string[]
  sample_order_sha256?: string
}

export class FormatError extends Error {}

export function writeView(filePath: string, data: Float32Array, n: number, dim: number) {
  if (data.length !== n * dim) {
    throw new FormatError(`payload has ${data.length} values, expected ${n * dim}`)
  }
  const header = Buffer.alloc(24)
  header.write(VIEW_MAGIC, 0, 'ascii')
  header.writeUInt32LE(FORMAT_VERSION, 4)
  header.writeBigUInt64LE(BigInt(n), 8)
  header.writeUInt32LE(dim, 16)
  header.writeUInt32LE(0, 20) // dtype 0 = f32
  const payload = Buffer.alloc(data.length * 4)
  for (let i = 0; i < data.length; i++) {
    payload.writeFloatLE(data[i], i * 4)
  }
  fs.writeFileSync(filePath, Buffer.concat([header, payload]))
}

export function writeLabels(filePath: string, labels: Int32Array) {
  const header = Buffer.alloc(16)
  header.write(LABEL_MAGIC, 0, 'ascii')
  header.writeUInt32LE(FORMAT_VERSION, 4)
  header.writeBigUInt64LE(BigInt(labels.length), 8)
  const payload = Buffer.alloc(labels.length * 4)
  for (let i = 0; i < labels.length; i++) {
    payload.writeInt32LE(labels[i], i * 4)
  }
  fs.writeFileSync(filePath, Buffer.concat([header, payload]))
}

export function readViewHeader(filePath: string): ViewHeader {
  const buf = fs.readFileSync(filePath)
  if (buf.length < 4 || buf.toString('ascii', 0, 4) !== VIEW_MAGIC) {
    throw new FormatError(`${filePath}: bad magic`)
  }
  if (buf.length < 24) {
    throw new FormatError(`${filePath}: header truncated at ${buf.length} bytes`)
  }
  const version = buf.readUInt32LE(4)
  if (version !== FORMAT_VERSION) {
    throw new FormatError(`${filePath}: unsupported version ${version}`)
  }
  const n = Number(buf.readBigUInt64LE(8))
  const dim = buf.readUInt32LE(16)
  const dtype = buf.readUInt32LE(20)
  if (dtype !== 0 && dtype !== 1) {
    throw new FormatError(`${filePath}: unknown dtype code ${dtype}`)
  }
  const itemSize = dtype === 0 ? 4 : 8
  const expected = 24 + n * dim * itemSize
  if (buf.length < expected) {
    throw new FormatError(
      `${filePath}: payload has ${buf.length - 24} bytes, header promises ${expected - 24}`,
    )
  }
  if (buf.length > expected) {
    throw new FormatError(`${filePath}: ${buf.length - expected} trailing bytes`)
  }
  return { n, dim, dtype }
}

export function readView(filePath: string): { header: ViewHeader; data: Float32Array } {
  const header = readViewHeader(filePath)
  const buf = fs.readFileSync(filePath)
  const data = new Float32Array(header.n * header.dim)
  for (let i = 0; i < data.length; i++) {
    data[i] =
      header.dtype === 0 ? buf.readFloatLE(24 + i * 4) : buf.readDoubleLE(24 + i * 8)
  }
  return { header, data }
}

export function readLabels(filePath: string): Int32Array {
  const buf = fs.readFileSync(filePath)
  if (buf.length < 4 || buf.toString('ascii', 0, 4) !== LABEL_MAGIC) {
    throw new FormatError(`${filePath}: bad magic`)
  }
  if (buf.length < 16) {
    throw new FormatError(`${filePath}: header truncated`)
  }
  const version = buf.readUInt32LE(4)
  if (version !== FORMAT_VERSION) {
    throw new FormatError(`${filePath}: unsupported version ${version}`)
  }
  const n = Number(buf.readBigUInt64LE(8))
  if (buf.length !== 16 + n * 4) {
    throw new FormatError(`${filePath}: payload size mismatch for n=${n}`)
  }
  const labels = new Int32Array(n)
  for (let i = 0; i < n; i++) {
    labels[i] = buf.readInt32LE(16 + i * 4)
  }
  return labels
}

export function writeManifest(outDir: string, manifest: Manifest): string {
  const filePath = path.join(outDir, 'manifest.json')
  fs.writeFileSync(filePath, JSON.stringify(manifest, null, 2) + '\n')
  return filePath
}

export function readManifest(filePath: string): Manifest {
  const doc = JSON.parse(fs.readFileSync(filePath, 'utf-8'))
  if (!doc.views || !Array.isArray(doc.views) || doc.views.length === 0) {
    throw new FormatError(`${filePath}: manifest lists no views`)
  }
  return doc as Manifest
}
