/**
 * Backbone registry.
 *
 * Two kinds of backbone are supported:
 *  - "tiny-pool/<dim>": a small fixed-weight convolutional stack bundled
 *    with the extractor (deterministic weights from a seeded PRNG). It
 *    needs no network access, which makes it the fixture backbone for
 *    tests and the cross-language round trip.
 *  - anything containing "://" or pointing at a local model.json: loaded
 *    as a TensorFlow.js graph model; its pooled output is the embedding.
 *
 * Backbones are frozen: weights are constants and nothing here trains.
 */

import * as fs from 'fs'
import * as tf from '@tensorflow/tfjs'

export class UnknownBackboneError extends Error {}
export class BackboneLoadError extends Error {}

export interface Backbone {
  id: string
  dim: number
  inputSize: number
  /** batch of HWC float images in [0,1] -> [batch, dim] embeddings */
  embed(batch: tf.Tensor4D): tf.Tensor2D
  dispose(): void
}

/** Deterministic PRNG (mulberry32) so bundled weights never change. */
function mulberry32(seed: number): () => number {
  let a = seed >>> 0
  return () => {
    a |= 0
    a = (a + 0x6d2b79f5) | 0
    let t = Math.imul(a ^ (a >>> 15), 1 | a)
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296
  }
}

function seededFilter(rand: () => number, shape: number[]): tf.Tensor4D {
  const size = shape.reduce((a, b) => a * b, 1)
  const values = new Float32Array(size)
  const fanIn = shape[0] * shape[1] * shape[2]
  const scale = Math.sqrt(2 / fanIn)
  for (let i = 0; i < size; i++) {
    // Box-Muller from two uniforms
    const u = Math.max(rand(), 1e-12)
    const v = rand()
    values[i] = scale * Math.sqrt(-2 * Math.log(u)) * Math.cos(2 * Math.PI * v)
  }
  return tf.tensor4d(values, shape as [number, number, number, number])
}

class TinyPoolBackbone implements Backbone {
  id: string
  dim: number
  inputSize = 32
  private filters: tf.Tensor4D[]

  constructor(dim: number) {
    this.id = `tiny-pool/${dim}`
    this.dim = dim
    const rand = mulberry32(0xc0ffee ^ dim)
    this.filters = [
      seededFilter(rand, [3, 3, 3, 16]),
      seededFilter(rand, [3, 3, 16, 32]),
      seededFilter(rand, [3, 3, 32, dim]),
    ]
  }

  embed(batch: tf.Tensor4D): tf.Tensor2D {
    return tf.tidy(() => {
      let x = batch
      x = tf.conv2d(x, this.filters[0], 2, 'same').relu()
      x = tf.conv2d(x, this.filters[1], 2, 'same').relu()
      x = tf.conv2d(x, this.filters[2], 1, 'same')
      return x.mean([1, 2]) as tf.Tensor2D
    })
  }

  dispose() {
    this.filters.forEach(f => f.dispose())
  }
}

class GraphModelBackbone implements Backbone {
  id: string
  dim: number
  inputSize: number
  private model: tf.GraphModel

  constructor(id: string, model: tf.GraphModel) {
    this.id = id
    this.model = model
    const inShape = model.inputs[0].shape
    this.inputSize = inShape && inShape.length === 4 && inShape[1]! > 0 ? inShape[1]! : 224
    this.dim = -1 // discovered on first embed
  }

  embed(batch: tf.Tensor4D): tf.Tensor2D {
    const out = tf.tidy(() => {
      let y = this.model.predict(batch) as tf.Tensor
      if (y.rank === 4) {
        y = y.mean([1, 2]) // spatial pooling
      }
      if (y.rank !== 2) {
        y = y.reshape([batch.shape[0], -1])
      }
      return y as tf.Tensor2D
    })
    this.dim = out.shape[1]
    return out
  }

  dispose() {
    this.model.dispose()
  }
}

const TINY_POOL = /^tiny-pool\/(\d+)$/

export async function loadBackbone(id: string): Promise<Backbone> {
  const tiny = TINY_POOL.exec(id)
  if (tiny) {
    const dim = parseInt(tiny[1], 10)
    if (dim < 1 || dim > 4096) {
      throw new UnknownBackboneError(`tiny-pool dimension out of range: ${id}`)
    }
    return new TinyPoolBackbone(dim)
  }
  if (id.includes('://') || id.endsWith('model.json')) {
    const url = id.includes('://') ? id : `file://${id}`
    if (url.startsWith('file://') && !fs.existsSync(id)) {
      throw new BackboneLoadError(`model file not found: ${id}`)
    }
    try {
      const model = await tf.loadGraphModel(url)
      return new GraphModelBackbone(id, model)
    } catch (e) {
      throw new BackboneLoadError(`failed to load ${id}: ${(e as Error).message}`)
    }
  }
  throw new UnknownBackboneError(
    `unknown backbone id "${id}" (use tiny-pool/<dim>, a URL, or a model.json path)`,
  )
}
