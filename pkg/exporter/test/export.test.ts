import { mkdirSync, mkdtempSync, readFileSync, readdirSync } from 'fs'
import { tmpdir } from 'os'
import { join } from 'path'
import * as tf from '@tensorflow/tfjs'
import { beforeAll, describe, expect, it } from 'vitest'

import { readTensor, writeTensor } from '../src/asht.ts'
import { readManifest, writeManifest } from '../src/manifest.ts'
import { buildDemoClassifier, loadModel, parseDemoSpec, saveModel } from '../src/model.ts'
import { runExport } from '../src/export.ts'

const N_SAMPLES = 1000
const INPUT_DIM = 12
const MODEL_ID = 'demo:12-24,16-5-3'

function makeInputDataset(dir: string, n: number, seed = 1234): void {
  mkdirSync(dir, { recursive: true })
  // deterministic pseudo-random inputs, no RNG dependency needed
  let state = seed
  const next = () => {
    state = (state * 1103515245 + 12345) % 2147483648
    return state / 2147483648 - 0.5
  }
  const entries = []
  for (let i = 0; i < n; i++) {
    const values = new Float32Array(INPUT_DIM)
    for (let j = 0; j < INPUT_DIM; j++) values[j] = next() * 4
    const name = `in-${String(i).padStart(5, '0')}.asht`
    writeTensor(join(dir, name), [INPUT_DIM], values)
    entries.push({ path: name, label: i % 5 })
  }
  writeManifest(join(dir, 'manifest.json'), { role: 'id-eval', entries })
}

describe('export pipeline', () => {
  let root: string
  let dataManifest: string

  beforeAll(() => {
    root = mkdtempSync(join(tmpdir(), 'export-'))
    makeInputDataset(join(root, 'inputs'), N_SAMPLES)
    dataManifest = join(root, 'inputs', 'manifest.json')
  })

  it('parses demo model identifiers', () => {
    expect(parseDemoSpec(MODEL_ID)).toEqual({
      inputDim: 12, hidden: [24, 16], classes: 5, seed: 3,
    })
    expect(parseDemoSpec('not-a-demo')).toBeNull()
  })

  it('exports one feature and logit tensor per sample, plus the head', async () => {
    const out = join(root, 'export1')
    const result = await runExport({
      model: MODEL_ID, data: dataManifest, hook: 'penultimate', batchSize: 128, outDir: out,
    })
    expect(result.count).toBe(N_SAMPLES)
    expect(result.featureDim).toBe(16)

    const features = readManifest(result.featuresManifest)
    expect(features.entries.length).toBe(N_SAMPLES)
    expect(features.role).toBe('id-eval')
    expect(features.entries[0].label).toBe(0)
    expect(features.transform).toBeDefined()

    const first = readTensor(join(out, 'features', features.entries[0].path))
    expect(first.dims).toEqual([16])

    const arch = JSON.parse(readFileSync(join(result.headBundle, 'arch.json'), 'utf-8'))
    expect(arch.layer_dims).toEqual([16, 5])
    expect(arch.hook).toBe('penultimate')
    const w = readTensor(join(result.headBundle, 'w0.asht'))
    expect(w.dims).toEqual([5, 16])
  })

  it('recomputed logits from exported features+head match framework logits within 1e-4', async () => {
    const out = join(root, 'export2')
    const result = await runExport({
      model: MODEL_ID, data: dataManifest, hook: 'penultimate', batchSize: 256, outDir: out,
    })
    const w = readTensor(join(result.headBundle, 'w0.asht')) // (out, in) row-major
    const b = readTensor(join(result.headBundle, 'b0.asht'))
    const [nOut, nIn] = w.dims

    const features = readManifest(result.featuresManifest)
    const logits = readManifest(result.logitsManifest)
    let worst = 0
    for (let i = 0; i < N_SAMPLES; i++) {
      const f = readTensor(join(out, 'features', features.entries[i].path)).values
      const z = readTensor(join(out, 'logits', logits.entries[i].path)).values
      for (let c = 0; c < nOut; c++) {
        let acc = b.values[c]
        for (let j = 0; j < nIn; j++) acc += w.values[c * nIn + j] * f[j]
        worst = Math.max(worst, Math.abs(acc - z[c]))
      }
    }
    expect(worst).toBeLessThan(1e-4)
  })

  it('re-export produces byte-identical files', async () => {
    const outA = join(root, 'replayA')
    const outB = join(root, 'replayB')
    for (const out of [outA, outB]) {
      await runExport({
        model: MODEL_ID, data: dataManifest, hook: 'penultimate', batchSize: 64, outDir: out,
      })
    }
    for (const sub of ['features', 'logits', 'head']) {
      const names = readdirSync(join(outA, sub)).sort()
      expect(names.length).toBeGreaterThan(0)
      for (const name of names) {
        const a = readFileSync(join(outA, sub, name))
        const bBytes = readFileSync(join(outB, sub, name))
        expect(a.equals(bBytes)).toBe(true)
      }
    }
  })

  it('saved models reload and predict identically', async () => {
    const model = buildDemoClassifier({ inputDim: 6, hidden: [8], classes: 3, seed: 9 })
    const dir = join(root, 'saved-model')
    await saveModel(model, dir)
    const back = await loadModel(dir)
    const x = tf.randomUniform([4, 6], -1, 1, 'float32', 42)
    const a = (model.predict(x) as tf.Tensor).dataSync()
    const bb = (back.predict(x) as tf.Tensor).dataSync()
    expect(Array.from(bb)).toEqual(Array.from(a))
  })

  it('export from a saved model directory works end to end', async () => {
    const model = buildDemoClassifier({ inputDim: INPUT_DIM, hidden: [10], classes: 4, seed: 5 })
    const dir = join(root, 'saved-model-2')
    await saveModel(model, dir)
    const result = await runExport({
      model: dir, data: dataManifest, hook: 'penultimate', batchSize: 512,
      outDir: join(root, 'export3'),
    })
    expect(result.featureDim).toBe(10)
    expect(result.count).toBe(N_SAMPLES)
  })

  it('rejects unknown hook sites', async () => {
    await expect(
      runExport({
        model: MODEL_ID, data: dataManifest, hook: 'pre-relu[1]' as any,
        batchSize: 8, outDir: join(root, 'bad'),
      }),
    ).rejects.toThrow(/hook/)
  })

  it('energy scores from exported logits match framework-side scores within 1e-4', async () => {
    const out = join(root, 'export1') // reuse the first export
    const logits = readManifest(join(out, 'logits', 'manifest.json'))
    const model = buildDemoClassifier(parseDemoSpec(MODEL_ID)!)
    const inputs = readManifest(dataManifest)
    const energy = (z: Float32Array | number[]) => {
      const m = Math.max(...z)
      let s = 0
      for (const v of z) s += Math.exp(v - m)
      return m + Math.log(s)
    }
    for (let i = 0; i < 50; i++) {
      const x = readTensor(join(root, 'inputs', inputs.entries[i].path)).values
      const frameworkLogits = tf.tidy(() =>
        (model.predict(tf.tensor2d([Array.from(x)])) as tf.Tensor).dataSync(),
      )
      const fileLogits = readTensor(join(out, 'logits', logits.entries[i].path)).values
      expect(Math.abs(energy(fileLogits) - energy(Array.from(frameworkLogits)))).toBeLessThan(1e-4)
    }
  })
})
