// Model loading and surgery: filesystem IO handlers for tfjs layers
// models (plain @tensorflow/tfjs ships none for node), a seeded demo
// classifier factory, and the split of a classifier into its penultimate
// backbone and final dense head.

import { mkdirSync, readFileSync, writeFileSync } from 'fs'
import { join } from 'path'
import * as tf from '@tensorflow/tfjs'

function fileSaveHandler(dir: string): tf.io.IOHandler {
  return {
    save: async (artifacts: tf.io.ModelArtifacts) => {
      mkdirSync(dir, { recursive: true })
      const weightsName = 'weights.bin'
      const manifest = [
        { paths: [weightsName], weights: artifacts.weightSpecs ?? [] },
      ]
      writeFileSync(
        join(dir, 'model.json'),
        JSON.stringify({
          modelTopology: artifacts.modelTopology,
          format: artifacts.format,
          generatedBy: artifacts.generatedBy,
          convertedBy: artifacts.convertedBy ?? null,
          weightsManifest: manifest,
        }),
      )
      writeFileSync(join(dir, weightsName), Buffer.from(artifacts.weightData as ArrayBuffer))
      return {
        modelArtifactsInfo: {
          dateSaved: new Date(),
          modelTopologyType: 'JSON' as const,
        },
      }
    },
  }
}

function fileLoadHandler(dir: string): tf.io.IOHandler {
  return {
    load: async (): Promise<tf.io.ModelArtifacts> => {
      const doc = JSON.parse(readFileSync(join(dir, 'model.json'), 'utf-8'))
      const weightSpecs: tf.io.WeightsManifestEntry[] = []
      const buffers: Buffer[] = []
      for (const group of doc.weightsManifest) {
        weightSpecs.push(...group.weights)
        for (const path of group.paths) buffers.push(readFileSync(join(dir, path)))
      }
      const data = Buffer.concat(buffers)
      return {
        modelTopology: doc.modelTopology,
        format: doc.format,
        generatedBy: doc.generatedBy,
        weightSpecs,
        weightData: data.buffer.slice(data.byteOffset, data.byteOffset + data.byteLength),
      }
    },
  }
}

export async function saveModel(model: tf.LayersModel, dir: string): Promise<void> {
  await model.save(fileSaveHandler(dir))
}

export async function loadModel(dir: string): Promise<tf.LayersModel> {
  return tf.loadLayersModel(fileLoadHandler(dir))
}

export interface DemoSpec {
  inputDim: number
  hidden: number[]
  classes: number
  seed: number
}

/** "demo:<in>-<h1,h2,...>-<classes>[-seed]" -> spec, e.g. demo:16-32,16-4-7 */
export function parseDemoSpec(identifier: string): DemoSpec | null {
  const m = identifier.match(/^demo:(\d+)-([\d,]+)-(\d+)(?:-(\d+))?$/)
  if (!m) return null
  return {
    inputDim: Number(m[1]),
    hidden: m[2].split(',').map(Number),
    classes: Number(m[3]),
    seed: m[4] ? Number(m[4]) : 0,
  }
}

/** Small dense ReLU classifier with seeded initializers, so rebuilding the
 * same spec yields identical weights. */
export function buildDemoClassifier(spec: DemoSpec): tf.LayersModel {
  const model = tf.sequential()
  let seed = spec.seed
  spec.hidden.forEach((units, i) => {
    model.add(tf.layers.dense({
      units,
      activation: 'relu',
      inputShape: i === 0 ? [spec.inputDim] : undefined,
      kernelInitializer: tf.initializers.glorotUniform({ seed: seed++ }),
      biasInitializer: 'zeros',
    }))
  })
  model.add(tf.layers.dense({
    units: spec.classes,
    kernelInitializer: tf.initializers.glorotUniform({ seed: seed++ }),
    biasInitializer: 'zeros',
    inputShape: spec.hidden.length === 0 ? [spec.inputDim] : undefined,
  }))
  return model
}

export async function resolveModel(identifier: string): Promise<tf.LayersModel> {
  const demo = parseDemoSpec(identifier)
  if (demo) return buildDemoClassifier(demo)
  return loadModel(identifier)
}

export interface SplitModel {
  backbone: tf.LayersModel // input -> penultimate features
  head: { kernel: tf.Tensor2D; bias: tf.Tensor1D } // logits = features . kernel + bias
  featureDim: number
}

/** Split at the penultimate hook site: everything up to the input of the
 * final dense layer, plus that layer's affine parameters. */
export function splitAtPenultimate(model: tf.LayersModel): SplitModel {
  const last = model.layers[model.layers.length - 1]
  if (last.getClassName() !== 'Dense') {
    throw new Error(`final layer is ${last.getClassName()}, expected a Dense classifier head`)
  }
  const [kernel, bias] = last.getWeights()
  if (!bias) throw new Error('final dense layer has no bias; export expects an affine head')
  const backbone = tf.model({
    inputs: model.inputs,
    outputs: last.input as tf.SymbolicTensor,
  })
  return {
    backbone,
    head: { kernel: kernel as tf.Tensor2D, bias: bias as tf.Tensor1D },
    featureDim: kernel.shape[0],
  }
}
