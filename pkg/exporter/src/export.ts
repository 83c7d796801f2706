// The export pipeline: read input tensors from a dataset manifest, run
// them through the model in batches, and write penultimate features,
// logits, and the classifier head in the toolkit's file formats. Features
// are exported pre-shaping so every shaping variant and pruning level can
// be swept downstream without re-running the model.

import { mkdirSync, writeFileSync } from 'fs'
import { join } from 'path'
import * as tf from '@tensorflow/tfjs'

import { readTensor, writeTensor } from './asht.ts'
import { DatasetManifest, ManifestRole, readManifest, resolveEntry, writeManifest } from './manifest.ts'
import { SplitModel, resolveModel, splitAtPenultimate } from './model.ts'

export interface ExportJob {
  model: string // path to a saved tfjs layers model, or a demo:... spec
  data: string // path to a dataset manifest of input tensors
  hook: 'penultimate'
  batchSize: number
  outDir: string
  role?: ManifestRole // overrides the input manifest's role tag
}

export interface ExportResult {
  featuresManifest: string
  logitsManifest: string
  headBundle: string
  count: number
  featureDim: number
}

const TRANSFORM_RECIPE = {
  input: 'asht-tensor',
  preprocessing: 'identity',
}

function toFloat32Rows(t: tf.Tensor2D): Float32Array[] {
  const [n, d] = t.shape
  const flat = t.dataSync() as Float32Array
  const rows: Float32Array[] = []
  for (let i = 0; i < n; i++) rows.push(flat.slice(i * d, (i + 1) * d))
  return rows
}

export function exportHead(split: SplitModel, outDir: string): string {
  mkdirSync(outDir, { recursive: true })
  // toolkit bundles store weights as (out, in) row-major; tfjs dense
  // kernels are (in, out)
  const kernelT = tf.tidy(() => split.head.kernel.transpose() as tf.Tensor2D)
  const [out, inDim] = kernelT.shape
  writeTensor(join(outDir, 'w0.asht'), [out, inDim], kernelT.dataSync() as Float32Array)
  writeTensor(join(outDir, 'b0.asht'), [out], split.head.bias.dataSync() as Float32Array)
  kernelT.dispose()
  const arch = {
    biases: ['b0.asht'],
    hook: 'penultimate',
    layer_dims: [inDim, out],
    weights: ['w0.asht'],
  }
  writeFileSync(join(outDir, 'arch.json'), JSON.stringify(arch, null, 2) + '\n')
  return outDir
}

export async function runExport(job: ExportJob): Promise<ExportResult> {
  if (job.hook !== 'penultimate') {
    throw new Error(`unknown hook site ${job.hook}: only 'penultimate' is supported`)
  }
  const model = await resolveModel(job.model)
  const split = splitAtPenultimate(model)
  const manifest = readManifest(job.data)
  const role = job.role ?? manifest.role

  const featuresDir = join(job.outDir, 'features')
  const logitsDir = join(job.outDir, 'logits')
  mkdirSync(featuresDir, { recursive: true })
  mkdirSync(logitsDir, { recursive: true })

  const featureEntries: DatasetManifest['entries'] = []
  const logitEntries: DatasetManifest['entries'] = []

  for (let start = 0; start < manifest.entries.length; start += job.batchSize) {
    const batch = manifest.entries.slice(start, start + job.batchSize)
    const inputs = batch.map(entry => {
      const tensor = readTensor(resolveEntry(manifest, entry))
      return Array.from(tensor.values)
    })
    const { featureRows, logitRows } = tf.tidy(() => {
      const x = tf.tensor2d(inputs)
      const features = split.backbone.predict(x) as tf.Tensor2D
      const logits = tf.add(tf.matMul(features, split.head.kernel), split.head.bias) as tf.Tensor2D
      return { featureRows: toFloat32Rows(features), logitRows: toFloat32Rows(logits) }
    })
    batch.forEach((entry, i) => {
      const name = `sample-${String(start + i).padStart(5, '0')}.asht`
      writeTensor(join(featuresDir, name), [featureRows[i].length], featureRows[i])
      writeTensor(join(logitsDir, name), [logitRows[i].length], logitRows[i])
      featureEntries.push({ path: name, label: entry.label })
      logitEntries.push({ path: name, label: entry.label })
    })
  }

  const featuresManifest = join(featuresDir, 'manifest.json')
  const logitsManifest = join(logitsDir, 'manifest.json')
  writeManifest(featuresManifest, { role, entries: featureEntries, transform: TRANSFORM_RECIPE })
  writeManifest(logitsManifest, { role, entries: logitEntries, transform: TRANSFORM_RECIPE })
  const headBundle = exportHead(split, join(job.outDir, 'head'))

  return {
    featuresManifest,
    logitsManifest,
    headBundle,
    count: manifest.entries.length,
    featureDim: split.featureDim,
  }
}
