import { strict as assert } from 'node:assert'
import { test } from 'node:test'
import { spawnSync } from 'node:child_process'
import * as fs from 'fs'
import * as os from 'os'
import * as path from 'path'
import { PNG } from 'pngjs'

import { extract } from '../src/extract'
import { main } from '../src/cli'
import { readViewHeader, readLabels } from '../src/formats'
import { verify } from '../src/verify'

function writePng(filePath: string, rgb: [number, number, number], size = 20) {
  const png = new PNG({ width: size, height: size })
  for (let i = 0; i < size * size; i++) {
    png.data[i * 4] = rgb[0]
    png.data[i * 4 + 1] = rgb[1]
    png.data[i * 4 + 2] = rgb[2]
    png.data[i * 4 + 3] = 255
  }
  fs.writeFileSync(filePath, PNG.sync.write(png))
}

/** Three labelled images in two class folders. */
function makeFixture(): string {
  const root = fs.mkdtempSync(path.join(os.tmpdir(), 'imgs-'))
  fs.mkdirSync(path.join(root, 'class_a'))
  fs.mkdirSync(path.join(root, 'class_b'))
  writePng(path.join(root, 'class_a', 'img0.png'), [200, 40, 40])
  writePng(path.join(root, 'class_a', 'img1.png'), [180, 60, 50])
  writePng(path.join(root, 'class_b', 'img0.png'), [30, 60, 220])
  return root
}

function outDir(): string {
  return fs.mkdtempSync(path.join(os.tmpdir(), 'extract-'))
}

test('three-image fixture through the bundled backbone', async () => {
  const dataset = makeFixture()
  const out = outDir()
  const result = await extract({
    dataset, backbones: ['tiny-pool/16'], split: 'train', outDir: out, batchSize: 2,
  })
  assert.equal(result.n, 3)
  assert.deepEqual(result.dims, [16])

  const header = readViewHeader(path.join(out, 'view_0.mvfv'))
  assert.equal(header.n, 3)
  assert.equal(header.dim, 16)
  assert.deepEqual(Array.from(readLabels(path.join(out, 'labels.mvlb'))), [0, 0, 1])

  const manifest = JSON.parse(fs.readFileSync(result.manifestPath, 'utf-8'))
  assert.equal(manifest.views.length, 1)
  assert.equal(manifest.views[0].backbone, 'tiny-pool/16')
  assert.equal(manifest.clusters, 2)
  assert.equal(manifest.samples.length, 3)
  assert.match(manifest.sample_order_sha256, /^[0-9a-f]{64}$/)

  const report = verify(result.manifestPath)
  assert.equal(report.ok, true, report.problems.join('; '))
})

test('two backbones share one sample ordering', async () => {
  const dataset = makeFixture()
  const out = outDir()
  const result = await extract({
    dataset, backbones: ['tiny-pool/8', 'tiny-pool/24'], split: 'train',
    outDir: out, batchSize: 16,
  })
  assert.deepEqual(result.dims, [8, 24])
  const h0 = readViewHeader(path.join(out, 'view_0.mvfv'))
  const h1 = readViewHeader(path.join(out, 'view_1.mvfv'))
  assert.equal(h0.n, h1.n)
  const report = verify(result.manifestPath)
  assert.equal(report.ok, true, report.problems.join('; '))
})

test('extraction is deterministic', async () => {
  const dataset = makeFixture()
  const a = outDir()
  const b = outDir()
  await extract({ dataset, backbones: ['tiny-pool/16'], split: 'train', outDir: a, batchSize: 2 })
  await extract({ dataset, backbones: ['tiny-pool/16'], split: 'train', outDir: b, batchSize: 3 })
  const bytesA = fs.readFileSync(path.join(a, 'view_0.mvfv'))
  const bytesB = fs.readFileSync(path.join(b, 'view_0.mvfv'))
  assert.ok(bytesA.equals(bytesB), 'same images and backbone give same bytes')
})

test('verify fails on a truncated view, naming the file', async () => {
  const dataset = makeFixture()
  const out = outDir()
  const result = await extract({
    dataset, backbones: ['tiny-pool/16'], split: 'train', outDir: out, batchSize: 4,
  })
  const viewPath = path.join(out, 'view_0.mvfv')
  fs.writeFileSync(viewPath, fs.readFileSync(viewPath).subarray(0, 60))
  const report = verify(result.manifestPath)
  assert.equal(report.ok, false)
  assert.ok(report.problems.some(p => p.includes('view_0.mvfv')))
})

test('verify fails on label misalignment', async () => {
  const dataset = makeFixture()
  const out = outDir()
  const result = await extract({
    dataset, backbones: ['tiny-pool/16'], split: 'train', outDir: out, batchSize: 4,
  })
  const { writeLabels } = await import('../src/formats')
  writeLabels(path.join(out, 'labels.mvlb'), new Int32Array([0, 1]))
  const report = verify(result.manifestPath)
  assert.equal(report.ok, false)
  assert.ok(report.problems.some(p => p.includes('alignment')))
})

test('cli exit codes distinguish failure kinds', async () => {
  const dataset = makeFixture()
  const out = outDir()
  assert.equal(
    await main(['extract', '--dataset', dataset, '--backbones', 'no-such-model',
                '--out', out]),
    2,
  )
  assert.equal(
    await main(['extract', '--dataset', dataset, '--backbones',
                path.join(dataset, 'missing', 'model.json'), '--out', out]),
    3,
  )
  assert.equal(
    await main(['extract', '--dataset', path.join(dataset, 'nowhere'),
                '--backbones', 'tiny-pool/8', '--out', out]),
    4,
  )
  const empty = fs.mkdtempSync(path.join(os.tmpdir(), 'empty-'))
  assert.equal(
    await main(['extract', '--dataset', empty, '--backbones', 'tiny-pool/8',
                '--out', out]),
    4,
  )
  assert.equal(await main(['bogus-command']), 1)
})

test('split subdirectory is honored when present', async () => {
  const root = fs.mkdtempSync(path.join(os.tmpdir(), 'split-'))
  fs.mkdirSync(path.join(root, 'train', 'class_a'), { recursive: true })
  fs.mkdirSync(path.join(root, 'test', 'class_a'), { recursive: true })
  writePng(path.join(root, 'train', 'class_a', 'a.png'), [10, 200, 10])
  writePng(path.join(root, 'train', 'class_a', 'b.png'), [10, 190, 20])
  writePng(path.join(root, 'test', 'class_a', 'c.png'), [15, 210, 10])
  const out = outDir()
  const result = await extract({
    dataset: root, backbones: ['tiny-pool/8'], split: 'test', outDir: out, batchSize: 4,
  })
  assert.equal(result.n, 1)
})

test('written files load through the engine dataio reader', async () => {
  const dataset = makeFixture()
  const out = outDir()
  await extract({
    dataset, backbones: ['tiny-pool/16', 'tiny-pool/8'], split: 'train',
    outDir: out, batchSize: 2,
  })
  const script = [
    'import sys, json',
    'from msrl.dataio import load_manifest',
    `ds = load_manifest(sys.argv[1])`,
    'print(json.dumps({"n": ds.n, "views": ds.n_views, ' +
      '"dims": [v.dim for v in ds.views], ' +
      '"labels": ds.labels.tolist(), "clusters": ds.n_clusters}))',
  ].join('\n')
  const proc = spawnSync('python3', ['-c', script, path.join(out, 'manifest.json')], {
    encoding: 'utf-8',
  })
  assert.equal(proc.status, 0, proc.stderr)
  const loaded = JSON.parse(proc.stdout)
  assert.equal(loaded.n, 3)
  assert.equal(loaded.views, 2)
  assert.deepEqual(loaded.dims, [16, 8])
  assert.deepEqual(loaded.labels, [0, 0, 1])
  assert.equal(loaded.clusters, 2)
})
