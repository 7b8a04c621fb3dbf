// Local-directory save/load for tf.LayersModel. The pure-JS tfjs build has no
// file:// IO handler, so these wrap the in-memory handlers with plain fs reads
// and writes of the standard model.json + weights shard layout.

import * as tf from '@tensorflow/tfjs'
import { mkdirSync, readFileSync, writeFileSync } from 'fs'
import { join } from 'path'

export async function saveModelToDir(model: tf.LayersModel, dir: string): Promise<void> {
  mkdirSync(dir, { recursive: true })
  await model.save(
    tf.io.withSaveHandler(async artifacts => {
      const weightData = artifacts.weightData as ArrayBuffer
      const modelJson = {
        modelTopology: artifacts.modelTopology,
        format: artifacts.format,
        generatedBy: artifacts.generatedBy,
        convertedBy: artifacts.convertedBy ?? null,
        weightsManifest: [
          { paths: ['weights.bin'], weights: artifacts.weightSpecs },
        ],
      }
      writeFileSync(join(dir, 'model.json'), JSON.stringify(modelJson))
      writeFileSync(join(dir, 'weights.bin'), Buffer.from(weightData))
      return {
        modelArtifactsInfo: {
          dateSaved: new Date(),
          modelTopologyType: 'JSON',
        },
      }
    }),
  )
}

export async function loadModelFromDir(dir: string): Promise<tf.LayersModel> {
  const modelJson = JSON.parse(readFileSync(join(dir, 'model.json'), 'utf-8'))
  const weightSpecs = modelJson.weightsManifest.flatMap(
    (group: { weights: unknown[] }) => group.weights,
  )
  const shards: Buffer[] = modelJson.weightsManifest.flatMap(
    (group: { paths: string[] }) => group.paths.map(p => readFileSync(join(dir, p))),
  )
  const weightData = Buffer.concat(shards)
  return tf.loadLayersModel(
    tf.io.fromMemory({
      modelTopology: modelJson.modelTopology,
      weightSpecs,
      weightData: weightData.buffer.slice(
        weightData.byteOffset,
        weightData.byteOffset + weightData.byteLength,
      ),
    }),
  )
}
