/**
 * Image-folder loading: recursive listing with a stable order, PNG/JPEG
 * decoding to float RGB in [0, 1].
 *
 * Folder conventions: a flat directory of images yields no labels; a
 * directory of class subfolders (class_a/img.png) yields integer labels
 * from the sorted class names. A top-level train/ or test/ pair selects
 * the requested split.
 */

import * as fs from 'fs'
import * as path from 'path'
import * as jpeg from 'jpeg-js'
import { PNG } from 'pngjs'

const IMAGE_EXTENSIONS = new Set(['.png', '.jpg', '.jpeg'])

export interface ImageSample {
  /** path relative to the dataset root, also the manifest ordering key */
  name: string
  absPath: string
  label: number | null
}

export interface ImageSet {
  samples: ImageSample[]
  classNames: string[] // empty when the folder is unlabelled
}

export class EmptyDatasetError extends Error {}

export function resolveSplitDir(datasetDir: string, split: string): string {
  const splitDir = path.join(datasetDir, split)
  if (fs.existsSync(splitDir) && fs.statSync(splitDir).isDirectory()) {
    return splitDir
  }
  return datasetDir
}

export function listImages(rootDir: string): ImageSet {
  const entries = fs.readdirSync(rootDir, { withFileTypes: true })
  const classDirs = entries
    .filter(e => e.isDirectory())
    .map(e => e.name)
    .sort()
  const flatImages = entries
    .filter(e => e.isFile() && IMAGE_EXTENSIONS.has(path.extname(e.name).toLowerCase()))
    .map(e => e.name)
    .sort()

  const samples: ImageSample[] = []
  if (classDirs.length > 0) {
    classDirs.forEach((cls, labelIndex) => {
      const clsDir = path.join(rootDir, cls)
      const files = fs
        .readdirSync(clsDir)
        .filter(f => IMAGE_EXTENSIONS.has(path.extname(f).toLowerCase()))
        .sort()
      for (const f of files) {
        samples.push({
          name: path.join(cls, f),
          absPath: path.join(clsDir, f),
          label: labelIndex,
        })
      }
    })
  }
  for (const f of flatImages) {
    samples.push({ name: f, absPath: path.join(rootDir, f), label: null })
  }
  if (samples.length === 0) {
    throw new EmptyDatasetError(`no images under ${rootDir}`)
  }
  const labelled = samples.every(s => s.label !== null)
  return { samples, classNames: labelled ? classDirs : [] }
}

export interface DecodedImage {
  width: number
  height: number
  /** RGB float32 in [0,1], HWC order */
  data: Float32Array
}

export function decodeImage(filePath: string): DecodedImage {
  const buf = fs.readFileSync(filePath)
  const ext = path.extname(filePath).toLowerCase()
  let width: number
  let height: number
  let rgba: Uint8Array
  if (ext === '.png') {
    const png = PNG.sync.read(buf)
    width = png.width
    height = png.height
    rgba = png.data
  } else if (ext === '.jpg' || ext === '.jpeg') {
    const img = jpeg.decode(buf, { useTArray: true })
    width = img.width
    height = img.height
    rgba = img.data
  } else {
    throw new Error(`unsupported image type: ${filePath}`)
  }
  const out = new Float32Array(width * height * 3)
  for (let p = 0; p < width * height; p++) {
    out[p * 3] = rgba[p * 4] / 255
    out[p * 3 + 1] = rgba[p * 4 + 1] / 255
    out[p * 3 + 2] = rgba[p * 4 + 2] / 255
  }
  return { width, height, data: out }
}
