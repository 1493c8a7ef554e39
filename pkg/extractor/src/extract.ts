/**
 * Extraction jobs: run every requested frozen backbone over an image
 * folder and write one MVFV view per backbone plus labels and the
 * manifest the clustering engine loads.
 *
 * All views share one sample ordering (the sorted listing); the ordering
 * and its sha256 are recorded in the manifest so alignment survives
 * transport.
 */

import * as crypto from 'crypto'
import * as fs from 'fs'
import * as path from 'path'
import * as tf from '@tensorflow/tfjs'

import { Backbone, loadBackbone } from './backbones'
import { EmptyDatasetError, ImageSet, decodeImage, listImages, resolveSplitDir } from './images'
import { Manifest, writeLabels, writeManifest, writeView } from './formats'

export interface ExtractJob {
  dataset: string
  backbones: string[]
  split: string
  outDir: string
  batchSize: number
}

export interface ExtractResult {
  manifestPath: string
  viewPaths: string[]
  labelsPath: string | null
  n: number
  dims: number[]
}

function batchTensor(imageSet: ImageSet, indices: number[], inputSize: number): tf.Tensor4D {
  return tf.tidy(() => {
    const rows = indices.map(i => {
      const img = decodeImage(imageSet.samples[i].absPath)
      const t = tf.tensor3d(img.data, [img.height, img.width, 3])
      return tf.image.resizeBilinear(t, [inputSize, inputSize])
    })
    return tf.stack(rows) as tf.Tensor4D
  })
}

async function embedAll(
  imageSet: ImageSet,
  backbone: Backbone,
  batchSize: number,
): Promise<{ data: Float32Array; dim: number }> {
  const n = imageSet.samples.length
  const chunks: Float32Array[] = []
  let dim = -1
  for (let start = 0; start < n; start += batchSize) {
    const indices = []
    for (let i = start; i < Math.min(start + batchSize, n); i++) indices.push(i)
    const batch = batchTensor(imageSet, indices, backbone.inputSize)
    const emb = backbone.embed(batch)
    dim = emb.shape[1]
    chunks.push(new Float32Array(await emb.data()))
    batch.dispose()
    emb.dispose()
  }
  const data = new Float32Array(n * dim)
  let offset = 0
  for (const c of chunks) {
    data.set(c, offset)
    offset += c.length
  }
  return { data, dim }
}

export async function extract(job: ExtractJob): Promise<ExtractResult> {
  if (!fs.existsSync(job.dataset) || !fs.statSync(job.dataset).isDirectory()) {
    throw new EmptyDatasetError(
      `dataset "${job.dataset}" is not a local directory (remote datasets are not re-hosted)`,
    )
  }
  const rootDir = resolveSplitDir(job.dataset, job.split)
  const imageSet = listImages(rootDir)
  const n = imageSet.samples.length

  fs.mkdirSync(job.outDir, { recursive: true })
  const viewPaths: string[] = []
  const dims: number[] = []
  for (let v = 0; v < job.backbones.length; v++) {
    const backbone = await loadBackbone(job.backbones[v])
    const { data, dim } = await embedAll(imageSet, backbone, job.batchSize)
    const viewPath = path.join(job.outDir, `view_${v}.mvfv`)
    writeView(viewPath, data, n, dim)
    viewPaths.push(viewPath)
    dims.push(dim)
    backbone.dispose()
  }

  let labelsPath: string | null = null
  if (imageSet.classNames.length > 0) {
    const labels = new Int32Array(imageSet.samples.map(s => s.label as number))
    labelsPath = path.join(job.outDir, 'labels.mvlb')
    writeLabels(labelsPath, labels)
  }

  const names = imageSet.samples.map(s => s.name)
  const manifest: Manifest = {
    views: viewPaths.map((p, v) => ({
      path: path.basename(p),
      backbone: job.backbones[v],
    })),
    samples: names,
    sample_order_sha256: crypto
      .createHash('sha256')
      .update(names.join('\n'))
      .digest('hex'),
  }
  if (labelsPath) {
    manifest.labels = path.basename(labelsPath)
    manifest.clusters = imageSet.classNames.length
  }
  const manifestPath = writeManifest(job.outDir, manifest)
  return { manifestPath, viewPaths, labelsPath, n, dims }
}
